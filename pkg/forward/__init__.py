"""
Finite-element forward solvers: complete electrode model, point electrode
model and the uniform-current gap model, plus voltage extraction.
"""
