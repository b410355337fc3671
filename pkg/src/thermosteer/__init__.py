"""Numerical laboratory for steering 2D Boussinesq flow on the torus with a
temperature control supported in a thin horizontal strip.

Subpackages follow the pipeline: spectral fields and the div-curl inversion
(`spectral`), the viscous vorticity-temperature solver (`solver`), the strip
partition and cutoffs (`geometry`), the convection strategy and generating
drift (`flows`), the transported-mode library (`modes`), synthesis of
non-localized controls (`linear_control`), localization and average correction
(`localization`), and the staged steering harness plus CLI (`steering`,
`cli`).
"""

__version__ = "0.1.0"
