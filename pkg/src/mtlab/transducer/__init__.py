from .lattice import (rnnt_loss, rnnt_forward_backward, kd_loss,
                      joint_lattice, joint_lattice_backward,
                      save_lattice, load_lattice,
                      ImpossibleAlignmentError, HAVE_COMPILED_KERNEL)
from .bruteforce import rnnt_loss_bruteforce, path_count

__all__ = [
    "rnnt_loss", "rnnt_forward_backward", "kd_loss",
    "joint_lattice", "joint_lattice_backward",
    "save_lattice", "load_lattice",
    "ImpossibleAlignmentError", "HAVE_COMPILED_KERNEL",
    "rnnt_loss_bruteforce", "path_count",
]
