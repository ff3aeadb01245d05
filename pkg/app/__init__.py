"""
Disordered Spin Laboratory

Exact-diagonalization studies of disordered quantum spin systems: spin
algebra, quenched disorder ensembles, Gibbs states and Duhamel products,
order-parameter variance trends and replica overlap diagnostics.
"""

__version__ = "0.1.0"
