"""Wireless networked control: plant/channel simulator, benchmarks and GCA-DRL codesign."""

__version__ = "0.1.0"
