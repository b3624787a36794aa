"""Cross-path consistency at production resolution, shared across one solve.

These run the finest whole-space comparison: the implicit-Euler path against
the representation-formula path, and the singular-operator application against
the differentiated convolution solution. One solve feeds both checks.
"""

import numpy as np
import pytest

from parakernel.coeffs import CoefficientField
from parakernel import operators as op
from parakernel import solver as sv


@pytest.fixture(scope="module")
def wholespace_bundle():
    field = CoefficientField.identity(2)
    forcing = sv.gaussian_bump_forcing([0.0, 0.0], 0.35, 0.03, 0.5, 1.0)
    reqs = {}
    sols = {}
    for label, (cells, nt) in {"mid": (48, 64), "fine": (96, 128)}.items():
        req = sv.SolveRequest("wholespace", field, forcing, (-3.0, -3.0),
                              (3.0, 3.0), (cells, cells), t1=0.6, nt=nt)
        reqs[label] = req
        sols[label] = sv.solve(req, method="kernel")
    return field, reqs, sols


def test_fd_matches_kernel_convolution(wholespace_bundle):
    field, reqs, sols = wholespace_bundle
    rels = {}
    for label in ("mid", "fine"):
        ufd = sv.solve(reqs[label])
        uk = sols[label]
        rels[label] = float(np.sqrt(np.sum((ufd.values - uk.values) ** 2)
                                    / np.sum(uk.values ** 2)))
    assert rels["fine"] <= 0.01
    assert rels["fine"] < rels["mid"]


def test_apply_matches_differentiated_convolution(wholespace_bundle):
    field, reqs, sols = wholespace_bundle
    rels = {}
    for label in ("mid", "fine"):
        _, hess = sv.derivatives(sols[label])
        fgrid = sv.sample_forcing(reqs[label])
        kf = op.apply(op.KernelSelector("frakG", field, 0, 1), fgrid)
        d01 = hess[(0, 1)]
        rels[label] = float(np.sqrt(np.sum((kf.values - d01.values) ** 2)
                                    / np.sum(d01.values ** 2)))
    assert rels["fine"] <= 0.02
    assert rels["fine"] < rels["mid"]
