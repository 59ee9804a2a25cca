"""Small from-scratch models used by the evaluation harness."""
from .cart import CartTree, cart_fit
from .gbt import GbtModel, gbt_fit
from .kmeans import KMeansModel, kmeans_fit
from .logistic import LogisticModel, logistic_fit
from .metrics import f1_macro, stratified_folds
from .pca import pca2, pca_components

__all__ = [
    "CartTree", "cart_fit", "GbtModel", "gbt_fit", "KMeansModel", "kmeans_fit",
    "LogisticModel", "logistic_fit", "f1_macro", "stratified_folds", "pca2", "pca_components",
]
