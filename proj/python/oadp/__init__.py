"""Object-aware distillation pyramid primitives."""

from ._oadp import *  # noqa: F401,F403
from ._oadp import OadpError, __doc__  # noqa: F401
