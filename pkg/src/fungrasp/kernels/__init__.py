"""Hot-kernel dispatch: numba JIT or pure numpy, per FUNGRASP_BACKEND."""

from ..backend import ACTIVE

if ACTIVE == "numba":
    from . import numba_impl as impl
else:
    from . import numpy_impl as impl

fk_links = impl.fk_links
gravity_torques_arrays = impl.gravity_torques_arrays
signed_closest = impl.signed_closest
pd_rollout = impl.pd_rollout

VERT_A = impl.VERT_A
VERT_B = impl.VERT_B
VERT_C = impl.VERT_C
EDGE_AB = impl.EDGE_AB
EDGE_BC = impl.EDGE_BC
EDGE_CA = impl.EDGE_CA
FACE = impl.FACE
