"""Select the compiled core if importable, else the numpy fallback.

Set ``GENRBF_BACKEND=python`` to force the fallback.
"""

import os

from . import _pycore

python_core = _pycore
compiled_core = None

try:
    from . import _core as compiled_core  # type: ignore[no-redef]
except ImportError:  # extension not built
    compiled_core = None

if os.environ.get("GENRBF_BACKEND", "").lower() == "python" or compiled_core is None:
    core = _pycore
    name = "python"
else:
    core = compiled_core
    name = "cython"
