"""Decentralized optimization with communication compression."""

try:
    from ._leadopt import *  # noqa: F401,F403
    from ._leadopt import __doc__ as _core_doc  # noqa: F401
except ImportError:  # in-tree builds put the extension on sys.path directly
    from _leadopt import *  # noqa: F401,F403
