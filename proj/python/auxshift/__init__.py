"""Linear multi-task auxiliary-information lab.

Thin python surface over the C++ core: generative problem settings, the
baseline / aux-inputs / aux-outputs / In-N-Out estimators, exact and
Monte-Carlo population risks, and the theorem-verification suites.
"""

from auxshift._core import *  # noqa: F401,F403
from auxshift._core import __version__  # noqa: F401
