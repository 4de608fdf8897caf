from .tensor import Tensor, as_tensor, assert_finite, is_grad_enabled, no_grad

__all__ = [
    "Tensor",
    "as_tensor",
    "assert_finite",
    "is_grad_enabled",
    "no_grad",
]
