"""Figure renderer for the spiking-network training/analysis artifacts.

Consumes only the CSV files and JSON metadata sidecars the trainer CLI
emits; it never imports the trainer or touches the network. Five figure
kinds: single-neuron traces, stability phase maps, learning curves with
std bands and 95%-of-final markers, ablation comparisons, and loss
landscape surface/contour pairs.
"""

__version__ = "0.1.0"

SUPPORTED_SCHEMA_VERSION = 1
