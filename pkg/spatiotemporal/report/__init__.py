"""Artifact rendering sub-package."""
