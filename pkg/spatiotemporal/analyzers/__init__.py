"""Analyzers sub-package: text, location, time-series, salience and coding stages."""
