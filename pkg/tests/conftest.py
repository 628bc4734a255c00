import math

import numpy as np
import pytest

from hiercal.calibration import LabelEstimators, PosteriorModel
from hiercal.compression import IdentityCompressor
from hiercal.hierarchy import parse_hierarchy

# 20-leaf scene hierarchy with uneven leaf depth and comma-bearing
# internal node names; used across the suite as a realistic tree.
SCENE_TERMINALS = [
    "aquarium", "art gallery", "church indoor", "bathroom", "bedroom",
    "corridor", "car interior", "beach", "coast", "canyon", "cliff",
    "amusement park", "athletic field", "baseball field", "arch", "castle",
    "cemetery", "church outdoor", "bridge", "building facade",
]

_SCENE_EDGES = [
    ("Indoor", "Unknown"),
    ("Outdoor", "Unknown"),
    ("Cultural", "Indoor"),
    ("Home or Hotel", "Indoor"),
    ("corridor", "Indoor"),
    ("car interior", "Indoor"),
    ("aquarium", "Cultural"),
    ("art gallery", "Cultural"),
    ("church indoor", "Cultural"),
    ("bathroom", "Home or Hotel"),
    ("bedroom", "Home or Hotel"),
    ("Outdoor Natural", "Outdoor"),
    ("Outdoor Man Made", "Outdoor"),
    ("bridge", "Outdoor"),
    ("building facade", "Outdoor"),
    ("Water, Ice, Snow", "Outdoor Natural"),
    ("Mountains, Hills, Deserts, Sky", "Outdoor Natural"),
    ("beach", "Water, Ice, Snow"),
    ("coast", "Water, Ice, Snow"),
    ("canyon", "Mountains, Hills, Deserts, Sky"),
    ("cliff", "Mountains, Hills, Deserts, Sky"),
    ("Sports Fields, Parks, Leisure Spaces", "Outdoor Man Made"),
    ("Cultural or Historical Building/Place", "Outdoor Man Made"),
    ("amusement park", "Sports Fields, Parks, Leisure Spaces"),
    ("athletic field", "Sports Fields, Parks, Leisure Spaces"),
    ("baseball field", "Sports Fields, Parks, Leisure Spaces"),
    ("arch", "Cultural or Historical Building/Place"),
    ("castle", "Cultural or Historical Building/Place"),
    ("cemetery", "Cultural or Historical Building/Place"),
    ("church outdoor", "Cultural or Historical Building/Place"),
]

SCENE_TEXT = (
    "terminals: " + ",".join(SCENE_TERMINALS) + "\n"
    + "\n".join(f"{child}\t{parent}" for child, parent in _SCENE_EDGES)
    + "\n"
)

TWO_LEVEL_TEXT = (
    "terminals: a1,a2,b1,b2\n"
    "A\troot\nB\troot\n"
    "a1\tA\na2\tA\nb1\tB\nb2\tB\n"
)


@pytest.fixture
def scene_tree():
    return parse_hierarchy(SCENE_TEXT)


@pytest.fixture
def two_level_tree():
    return parse_hierarchy(TWO_LEVEL_TEXT)


@pytest.fixture
def star_tree():
    text = "terminals: a,b,c,d\n" + "".join(f"{t}\troot\n" for t in "abcd")
    return parse_hierarchy(text)


def gradient_descent_logistic(features, targets, l2=1e-4, grad_norm=1e-10,
                              max_steps=400_000):
    """Brute-force fixed-step gradient descent on the regularized
    logistic loss; independent oracle for the quasi-Newton fit.

    The step size is 1 over an upper bound of the Hessian's largest
    eigenvalue, so descent is guaranteed. Runs until the gradient
    2-norm falls below ``grad_norm``.
    """
    Z = np.asarray(features, dtype=float)
    t = np.asarray(targets, dtype=float)
    n = Z.shape[0]
    aug = np.hstack([Z, np.ones((n, 1))])
    lipschitz = 0.25 * np.linalg.eigvalsh(aug.T @ aug / n).max() + l2
    step = 1.0 / lipschitz
    params = np.zeros(Z.shape[1] + 1)
    for _ in range(max_steps):
        w, b = params[:-1], params[-1]
        p = 1.0 / (1.0 + np.exp(-(Z @ w - b)))
        residual = (p - t) / n
        grad = np.append(Z.T @ residual + l2 * w, -residual.sum())
        if np.linalg.norm(grad) <= grad_norm:
            return params[:-1], float(params[-1])
        params = params - step * grad
    raise AssertionError("gradient-descent oracle did not converge")


def constant_model(posteriors, label_names=None):
    """Model whose estimators always emit the given terminal posteriors.

    Zero weights with bias -logit(p) make every conditioning label return
    exactly ``posteriors`` before normalization.
    """
    p = np.asarray(posteriors, dtype=float)
    n = p.size
    names = tuple(label_names) if label_names else tuple(f"t{k}" for k in range(n))
    biases = np.array([-math.log(v / (1.0 - v)) for v in p])
    per_label = {
        i: LabelEstimators(np.zeros((n, n)), biases.copy()) for i in range(n)
    }
    return PosteriorModel(names, IdentityCompressor(n), per_label, frozenset())
