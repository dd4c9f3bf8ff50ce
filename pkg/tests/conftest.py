"""Shared fixtures and frozen reference values.

The PSI table was produced by an independent extended-precision evaluation
(mpmath, 50 significant digits, 200 product terms) before the package
implementation existed; tests compare against these frozen constants, never
against the package's own output.
"""

import os

import pytest

from aimdmf import loads_model

# psi(r) = sqrt(2/pi) * prod_n (1 - r^(2n)) / (1 - r^(2n-1))
PSI = {
    0.0: 0.797884560802865355879892119869,
    0.3: 1.05937919291589004037778264538,
    0.5: 1.30983327465802066437458026471,
    0.7: 1.75075930879438395759376169954,
    0.9: 3.12162508910781867576968471532,
}
PSI_05_TWO_THIRDS = 1.19713743785058445659886577923  # psi(0.5) ** (2/3)

CONFIG_DIR = os.path.join(os.path.dirname(__file__), os.pardir, "configs")


def config_path(name):
    return os.path.abspath(os.path.join(CONFIG_DIR, name))


# One class on one node, a = 1, beta = 1: the canonical unit-rate connection
# whose stationary law is H_{0.5,1}.
ONE_CLASS_UNIT = """
[network]
J = 1
K = 1
allocation = [1.0]

[class.1]
r = 0.5
p = 1.0
drift = {kind = "constant", a = 1.0}
loss = {form = "multiplicative", scope = "aggregate", rate = {kind = "constant", c0 = 1.0}}
"""

# Same connection but detached from the node (A = 0): utilization is
# identically zero, so particles are independent.
ONE_CLASS_DECOUPLED = """
[network]
J = 1
K = 1
allocation = [0.0]

[class.1]
r = 0.5
p = 1.0
drift = {kind = "constant", a = 1.0}
loss = {form = "multiplicative", scope = "aggregate", rate = {kind = "constant", c0 = 1.0}}
"""

# One self-coupled class: b(w, u) = w * (0.5 + u) with u driven by the
# class mean itself.
ONE_CLASS_COUPLED = """
[network]
J = 1
K = 1
allocation = [1.0]

[class.1]
r = 0.5
p = 1.0
drift = {kind = "constant", a = 1.0}
loss = {form = "multiplicative", scope = "aggregate", rate = {kind = "affine", c0 = 0.5, c1 = 1.0}}
"""


def one_class_model(r=0.5, a=1.0, rate='{kind = "constant", c0 = 1.0}',
                    alloc=1.0, counts=None):
    counts_line = f"counts = [{counts}]\n" if counts is not None else ""
    return loads_model(f"""
[network]
J = 1
K = 1
allocation = [{alloc}]
{counts_line}
[class.1]
r = {r}
p = 1.0
drift = {{kind = "constant", a = {a}}}
loss = {{form = "multiplicative", scope = "aggregate", rate = {rate}}}
""")


@pytest.fixture(scope="session")
def unit_model():
    return loads_model(ONE_CLASS_UNIT)


@pytest.fixture(scope="session")
def decoupled_model():
    return loads_model(ONE_CLASS_DECOUPLED)


@pytest.fixture(scope="session")
def coupled_model():
    return loads_model(ONE_CLASS_COUPLED)


@pytest.fixture(scope="session")
def canonical_model():
    from aimdmf import load_model

    return load_model(config_path("single_node.cfg"))
