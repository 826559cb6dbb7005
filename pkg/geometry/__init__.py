"""
Domain geometry for the EIT toolkit: boundary curves, electrodes,
triangular meshes and layered tissue phantoms.
All values are immutable once built.
"""
