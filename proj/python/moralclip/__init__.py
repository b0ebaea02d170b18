from ._moralclip import *  # noqa: F401,F403
from ._moralclip import __version__  # noqa: F401
