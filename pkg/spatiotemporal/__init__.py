"""
Spatio-temporal comparison of a geolocated tweet corpus.

Reads line-delimited tweet exports, maps self-reported locations to regions,
clusters regional activity series into an epicentre and a periphery, and
ranks the terms characteristic of every period and cluster by scaled F-score.

Usage:
    python -m spatiotemporal run --config data/fixtures/config.toml
    python -m spatiotemporal run --config my.toml --out-dir output/ --seed 7
    python -m spatiotemporal geonorm --config my.toml --top 30
"""
