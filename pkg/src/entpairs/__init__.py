"""Dissipative stabilization of entangled qubit pairs in cavity/qubit arrays.

Model construction (:mod:`entpairs.models`), Liouvillian steady states and
spectra (:mod:`entpairs.liouvillian`), time evolution
(:mod:`entpairs.dynamics`), concurrence (:mod:`entpairs.entanglement`) and the
command-line front end (:mod:`entpairs.cli`).
"""

__version__ = "0.1.0"

from .models import DisorderSpec, ModelSpec  # noqa: E402

__all__ = ["DisorderSpec", "ModelSpec", "__version__"]
