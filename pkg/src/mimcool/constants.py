"""Physical constants (CODATA 2018, 10 significant figures).

All other modules import from here; nothing else hardcodes constants.
"""

HBAR = 1.054571817e-34  # reduced Planck constant, J s
KB = 1.380649e-23       # Boltzmann constant, J/K (exact)
C_LIGHT = 299792458.0   # speed of light, m/s (exact)
R_GAS = 8.314462618     # molar gas constant, J/(mol K) (exact)

TWO_PI = 6.283185307179586
