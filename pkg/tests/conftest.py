import json
import os

import numpy as np
import pytest

from subrumin.expr import BinOp, Call, Neg, Num, Pi, Pow, Var
from subrumin.nilmanifold import calibrate_landau, save_calibration

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def calibration(tmp_path_factory):
    """One Landau calibration per test session, cached where the library and CLI look for it."""
    path = tmp_path_factory.mktemp("calibration") / "landau_calibration.json"
    cal = calibrate_landau()
    save_calibration(cal, path)
    old = os.environ.get("SUBRUMIN_CALIBRATION")
    os.environ["SUBRUMIN_CALIBRATION"] = str(path)
    yield cal
    if old is None:
        os.environ.pop("SUBRUMIN_CALIBRATION", None)
    else:
        os.environ["SUBRUMIN_CALIBRATION"] = old


@pytest.fixture(scope="session")
def landau(calibration):
    return calibration.extrapolated


def random_expr(rng, depth=3, variables=("x", "y", "z")):
    """A random smooth expression; exponents stay small so values stay moderate."""
    if depth == 0 or rng.random() < 0.25:
        r = rng.random()
        if r < 0.5:
            return Var(str(rng.choice(variables)))
        if r < 0.6:
            return Pi()
        return Num(float(np.round(rng.uniform(0.1, 2.0), 3)))
    kind = rng.integers(6)
    if kind == 0:
        return Neg(random_expr(rng, depth - 1, variables))
    if kind in (1, 2):
        op = str(rng.choice(["+", "-", "*"]))
        return BinOp(op, random_expr(rng, depth - 1, variables), random_expr(rng, depth - 1, variables))
    if kind == 3:
        return Pow(random_expr(rng, depth - 1, variables), int(rng.integers(0, 3)))
    if kind == 4:
        fn = str(rng.choice(["sin", "cos"]))
        return Call(fn, random_expr(rng, depth - 1, variables))
    # a quotient whose denominator stays in [1, 3]
    den = BinOp("+", Num(2.0), Call("cos", random_expr(rng, depth - 1, variables)))
    return BinOp("/", random_expr(rng, depth - 1, variables), den)


@pytest.fixture
def expr_factory():
    return random_expr


def dump_json(obj):
    return json.dumps(obj, sort_keys=True)
