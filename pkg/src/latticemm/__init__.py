"""Nested-lattice quantization for approximate matrix multiplication."""

from .lattices import Lattice, dn, draw_dither, e8, gamma1_rule_of_thumb, get_lattice, second_moment_mc, zn
from .pipeline import (
    ConfigMismatch,
    EncodedMatrix,
    InnerProductLUT,
    PipelineConfig,
    build_lut,
    decode_matmul,
    decode_matmul_lut,
    encode_matrix,
    lut_for,
    mmse_alpha,
    one_sided_matmul,
)
from .rotation import RotationSpec, apply_rht, center_column, fwht_inplace
from .voronoi import NestedCode, beta_from_gamma, decode_block, encode_block, encode_escalating

__version__ = "0.1.0"
