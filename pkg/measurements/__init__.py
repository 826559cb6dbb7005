"""
Measurement frames: inject-measure pattern sets, simulated U and V data,
geometry-free G, reference-subtracted B, noise and CSV/JSON I/O.
"""
