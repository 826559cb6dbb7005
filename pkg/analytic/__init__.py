"""
Closed-form references and verification harnesses: disk formulas, Neumann
functions, the 1D harmonic-average identity and the electrode-model
convergence study.
"""
