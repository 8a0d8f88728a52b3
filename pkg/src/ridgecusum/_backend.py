"""Select the compiled kernels when available, else the numpy fallback.

Set ``RIDGECUSUM_PURE_PYTHON=1`` to force the fallback.
"""

import os

BACKEND = "python"

if os.environ.get("RIDGECUSUM_PURE_PYTHON") != "1":
    try:
        from ._kernels import (  # noqa: F401
            dense_sup,
            gram_values,
            kahan_cumsum,
            scan_gram_max,
            scan_linf_max,
        )

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on the build
        pass

if BACKEND == "python":
    from ._kernels_py import (  # noqa: F401
        dense_sup,
        gram_values,
        kahan_cumsum,
        scan_gram_max,
        scan_linf_max,
    )
