"""
Local linearised reconstruction of the outermost-region-subtracted image
and its diagnostics.
"""
