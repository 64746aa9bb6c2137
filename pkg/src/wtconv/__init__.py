"""WTConv: depth-wise convolution in a cascaded Haar wavelet domain (numpy)."""

from .layer import WTConvParams, identity_params, init_params, wtconv_forward
from .grad import wtconv_backward
from .wavelet import HAAR, wt_cascade, wt_cascade_inverse, wt_forward, wt_inverse

__version__ = "0.1.0"

__all__ = [
    "HAAR",
    "WTConvParams",
    "identity_params",
    "init_params",
    "wt_cascade",
    "wt_cascade_inverse",
    "wt_forward",
    "wt_inverse",
    "wtconv_backward",
    "wtconv_forward",
]
