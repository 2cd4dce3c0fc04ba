from obia.classifiers.samples import SampleSet
from obia.classifiers.cart import CartTree, cart_predict, cart_train
from obia.classifiers.mlp import Mlp, mlp_gradient_check, mlp_predict, mlp_train

__all__ = [
    "SampleSet", "CartTree", "cart_train", "cart_predict",
    "Mlp", "mlp_train", "mlp_predict", "mlp_gradient_check",
]
