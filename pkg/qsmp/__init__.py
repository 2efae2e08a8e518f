# Semi-Markov and memory-kernel quantum dynamics toolkit.
__version__ = "0.1.0"
