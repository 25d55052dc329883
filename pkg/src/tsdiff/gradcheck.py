"""Central finite-difference verification of analytic gradients.

Every differentiable kernel gets a small randomized case whose scalar loss
is a fixed random weighting of the kernel output, so the checked cotangent
is generic. Relative error per element is |a - n| / max(|a|, |n|, 1).
"""

from dataclasses import dataclass

import numpy as np

from . import nn
from .denoiser import Denoiser, DenoiserConfig, denoiser_schema, init_from_schema
from .errors import ConfigError


@dataclass(frozen=True)
class CheckResult:
    name: str
    max_rel_err: float
    n_elements: int

    def passed(self, tol: float) -> bool:
        return self.max_rel_err < tol


def tolerances(dtype) -> tuple:
    """(step, tolerance) for central differences at this precision."""
    if np.dtype(dtype) == np.float64:
        return 1e-5, 1e-5
    if np.dtype(dtype) == np.float32:
        return 1e-2, 1e-3
    raise ConfigError(f"gradcheck supports float32/float64, got {dtype}")


def numeric_gradients(loss_fn, params: nn.ParameterSet, h: float) -> dict:
    """Central differences of a deterministic scalar loss in the parameters."""
    grads = {}
    with nn.no_grad():
        for p in params:
            flat = p.value.data.reshape(-1)
            g = np.zeros(flat.size, dtype=np.float64)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                f_plus = loss_fn()
                flat[i] = orig - h
                f_minus = loss_fn()
                flat[i] = orig
                g[i] = (f_plus - f_minus) / (2.0 * h)
            grads[p.name] = g.reshape(p.value.shape)
    return grads


def compare_gradients(name: str, build_loss, params: nn.ParameterSet,
                      h: float) -> CheckResult:
    """Max elementwise relative error between analytic and numeric grads."""
    analytic = nn.gradient_of(build_loss(), params)
    numeric = numeric_gradients(lambda: float(build_loss().data), params, h)
    worst = 0.0
    count = 0
    for key in analytic:
        a = analytic[key].astype(np.float64)
        n = numeric[key]
        rel = np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1.0)
        worst = max(worst, float(rel.max()))
        count += a.size
    return CheckResult(name, worst, count)


def _case(name, shapes, fn, dtype, seed=11):
    """One kernel case: named inputs become parameters, fn maps them to a
    scalar loss tensor (a fixed random weighting if the output is not
    already scalar)."""
    init_rng = np.random.default_rng(seed)
    params = nn.ParameterSet()
    for pname, shape in shapes.items():
        params.add(pname, init_rng.standard_normal(shape).astype(dtype))
    cache = {}

    def build():
        rng = np.random.default_rng(seed + 2)    # fixed so dropout masks repeat
        values = {pname: params[pname].value for pname in shapes}
        out = fn(values, rng)
        if out.size == 1:
            return out
        if "weights" not in cache:
            cache["weights"] = nn.Tensor(
                np.random.default_rng(seed + 1).standard_normal(out.shape).astype(dtype))
        return nn.tsum(nn.mul(out, cache["weights"]))

    return name, build, params


def kernel_cases(dtype=np.float64) -> list:
    """(name, build_loss, params) for every differentiable kernel."""
    cases = []

    def add_case(name, shapes, fn, seed=11):
        cases.append(_case(name, shapes, fn, dtype, seed=seed))

    add_case("add", {"a": (3, 4), "b": (3, 4)},
             lambda v, r: nn.add(v["a"], v["b"]))
    add_case("add_broadcast", {"a": (2, 3, 4), "b": (4,)},
             lambda v, r: nn.add(v["a"], v["b"]))
    add_case("sub", {"a": (3, 4), "b": (3, 4)},
             lambda v, r: nn.sub(v["a"], v["b"]))
    add_case("mul_broadcast", {"a": (3, 4), "b": (3, 1)},
             lambda v, r: nn.mul(v["a"], v["b"]))
    add_case("scale", {"a": (5, 3)},
             lambda v, r: nn.scale(v["a"], -1.7))
    add_case("gelu", {"a": (4, 5)},
             lambda v, r: nn.gelu(v["a"]))
    add_case("matmul", {"a": (4, 6), "b": (6, 3)},
             lambda v, r: nn.matmul(v["a"], v["b"]))
    add_case("matmul_batched", {"a": (2, 3, 4, 5), "b": (5, 6)},
             lambda v, r: nn.matmul(v["a"], v["b"]))
    add_case("transpose", {"a": (2, 3, 4)},
             lambda v, r: nn.transpose(v["a"], (2, 0, 1)))
    add_case("reshape", {"a": (3, 8)},
             lambda v, r: nn.reshape(v["a"], (2, 3, 4)))
    add_case("concat", {"a": (2, 3), "b": (2, 5)},
             lambda v, r: nn.concat([v["a"], v["b"]], axis=1))
    add_case("tsum", {"a": (3, 4, 2)},
             lambda v, r: nn.tsum(v["a"], axis=1))
    add_case("tmean", {"a": (3, 4, 2)},
             lambda v, r: nn.tmean(v["a"], axis=(0, 2)))
    add_case("softmax", {"a": (3, 6)},
             lambda v, r: nn.softmax(v["a"], axis=-1))
    add_case("layer_norm", {"x": (4, 6), "g": (6,), "b": (6,)},
             lambda v, r: nn.layer_norm(v["x"], v["g"], v["b"]))
    add_case("dropout", {"a": (6, 6)},
             lambda v, r: nn.dropout(v["a"], 0.3, r))
    add_case("linear", {"x": (5, 4), "w": (4, 3), "b": (3,)},
             lambda v, r: nn.linear(v["x"], v["w"], v["b"]))
    add_case("mse", {"p": (4, 5), "t": (4, 5)},
             lambda v, r: nn.mse(v["p"], v["t"]))
    add_case("cross_entropy", {"logits": (6, 3)},
             lambda v, r: nn.cross_entropy(v["logits"], np.array([0, 1, 2, 0, 1, 2])))
    return cases


def denoiser_case(dtype=np.float64):
    """End-to-end tiny denoiser: MSE of predicted noise against a target."""
    cfg = DenoiserConfig(input_dim=3, seq_len=4, n_layers=1, d_model=8,
                         n_heads=2, d_ff=16)
    params = init_from_schema(denoiser_schema(cfg), np.random.default_rng(23), dtype=dtype)
    model = Denoiser(cfg, params)
    data_rng = np.random.default_rng(24)
    x = nn.Tensor(data_rng.standard_normal((2, 4, 3)).astype(dtype))
    target = nn.Tensor(data_rng.standard_normal((2, 4, 3)).astype(dtype))
    t = np.array([1, 7])

    def build():
        return nn.mse(model.forward(x, t), target)

    return "denoiser_end_to_end", build, params


def run_all(dtype=np.float64) -> list:
    """CheckResults for every kernel plus the end-to-end denoiser."""
    h, _ = tolerances(dtype)
    results = []
    for name, build, params in kernel_cases(dtype) + [denoiser_case(dtype)]:
        results.append(compare_gradients(name, build, params, h))
    return results
