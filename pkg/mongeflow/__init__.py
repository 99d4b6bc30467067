import jax

# bound checks run at 1e-10..1e-12 tolerances
jax.config.update('jax_enable_x64', True)

from .version import __version__
