"""
Model kinds shared by tuning, the experiment pipeline and the command line.
"""

from typing import Optional, Tuple, Union

from dataset import PUDataset
from errors import InvalidHyperparameter
from gllc import GllcModel, fit_gllc_kernel, fit_gllc_linear
from pual_kernel import KernelModel, KernelSpec, fit_kernel
from pual_linear import Hyperparams, LinearModel, SolveReport, StopCriteria, fit
from similarity import LaplacianMatrix

PUAL_LINEAR = "pual-linear"
PUAL_KERNEL = "pual-kernel"
GLLC_LINEAR = "gllc-linear"
GLLC_KERNEL = "gllc-kernel"
MODEL_KINDS = (PUAL_LINEAR, PUAL_KERNEL, GLLC_LINEAR, GLLC_KERNEL)
KERNEL_MODEL_KINDS = (PUAL_KERNEL, GLLC_KERNEL)

KERNEL_CHOICES = ("rbf", "linear-via-b", "none")


def check_kind(kind: str) -> str:
    if kind not in MODEL_KINDS:
        raise InvalidHyperparameter(f"unknown model kind {kind!r}, expected one of {MODEL_KINDS}")
    return kind


def make_kernel(choice: str, hp: Hyperparams) -> Optional[KernelSpec]:
    """rbf uses lambda as its width; linear-via-b builds B from the same hyperparameters"""
    if choice == "rbf":
        return KernelSpec.rbf(hp.lam)
    if choice == "linear-via-b":
        return KernelSpec.linear_via_b(hp)
    if choice == "none":
        return None
    raise InvalidHyperparameter(f"unknown kernel {choice!r}, expected one of {KERNEL_CHOICES}")


def train(kind: str, data: PUDataset, hp: Hyperparams, stop: StopCriteria = StopCriteria(),
          kernel: Union[str, KernelSpec, None] = "rbf", standardize: bool = True,
          laplacian: Optional[LaplacianMatrix] = None, precomputed_gram=None):
    """Fit one model kind; GLLC fits report zero iterations"""
    check_kind(kind)
    if kind in KERNEL_MODEL_KINDS:
        spec = kernel if isinstance(kernel, KernelSpec) else make_kernel(kernel or "rbf", hp)
        if spec is None:
            raise InvalidHyperparameter(f"{kind} needs a kernel, got 'none'")
        if kind == PUAL_KERNEL:
            return fit_kernel(data, hp, spec, stop, standardize, laplacian, precomputed_gram)
        return (fit_gllc_kernel(data, hp, spec, standardize, laplacian, precomputed_gram),
                SolveReport(0, True, 0.0))

    if kind == PUAL_LINEAR:
        return fit(data, hp, stop, standardize, laplacian, track_objective=False)
    return fit_gllc_linear(data, hp, standardize, laplacian), SolveReport(0, True, 0.0)


def kind_of(model) -> str:
    if isinstance(model, LinearModel):
        return PUAL_LINEAR
    if isinstance(model, KernelModel):
        return PUAL_KERNEL
    if isinstance(model, GllcModel):
        return GLLC_KERNEL if model.is_kernel else GLLC_LINEAR
    raise TypeError(f"not a PU model: {type(model).__name__}")


def predict(model, features) -> Tuple:
    return model.predict(features)
