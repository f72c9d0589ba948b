"""Hand-built model graphs with closed-form behavior, for optimizer and
service tests that must not depend on slow training."""
import numpy as np

from chillerplant.simplant import OnOff, Weather
from chillerplant.surrogate import MlpModel, PlantModelGraph, PolyModel

N = 3


def constant_mlp(value: float, feature_names) -> MlpModel:
    """An MLP that predicts `value` regardless of input (zero weights)."""
    n = len(feature_names)
    return MlpModel(
        feature_names=tuple(feature_names),
        x_mean=np.zeros(n), x_scale=np.ones(n),
        y_mean=float(value), y_scale=1.0,
        w1=np.zeros((n, 3)), b1=np.zeros(3),
        w2=np.zeros(3), b2=0.0,
    )


def quadratic_graph(optimum=(50.0, 50.0, 50.0),
                    chfhdr=120.0, cwfhdr=200.0, cwshdr=27.0) -> PlantModelGraph:
    """Total power = sum of (speed - optimum)^2 + 30 per control; flow and
    temperature predictions are constants, so any wide quantity bound is
    satisfied everywhere."""

    def bowl(center):
        # (x - c)^2 + 30 as ascending cubic coefficients
        return PolyModel((center * center + 30.0, -2.0 * center, 1.0, 0.0),
                         x_min=20.0, x_max=100.0)

    cwp_c, chwp_c, ct_c = optimum
    names = {
        "chfm": ("chwp_speed",) + tuple(f"on_chwp{i+1}" for i in range(N)),
        "cwfm": ("cwp_speed",) + tuple(f"on_cwp{i+1}" for i in range(N)),
        "cwtm": ("ct_speed",) + tuple(f"on_ct{i+1}" for i in range(N)) + ("db", "rh"),
        "ch": ("chfhdr", "cwfhdr", "cwshdr", "load_rt", "chsp"),
    }
    return PlantModelGraph(
        chwp=tuple(bowl(chwp_c) for _ in range(N)),
        cwp=tuple(bowl(cwp_c) for _ in range(N)),
        ct=tuple(bowl(ct_c) for _ in range(N)),
        chfm=constant_mlp(chfhdr, names["chfm"]),
        cwfm=constant_mlp(cwfhdr, names["cwfm"]),
        cwtm=constant_mlp(cwshdr, names["cwtm"]),
        ch=tuple(constant_mlp(0.0, names["ch"]) for _ in range(N)),
        quantity_bounds={"chfhdr": (0.0, 500.0), "cwfhdr": (0.0, 500.0),
                         "cwshdr": (0.0, 50.0)},
    )


ALL_ON = OnOff()
WEATHER = Weather(30.0, 60.0)
