"""Balanced resonate-and-fire recurrent spiking networks.

Library + CLI for training single-layer recurrent spiking networks built
from balanced resonate-and-fire neurons (with vanilla-RF and ALIF ablation
baselines), analyzing their gradient flow and stability, and scanning
filter-normalized error landscapes.
"""

__version__ = "0.1.0"

SCHEMA_VERSION = 1
