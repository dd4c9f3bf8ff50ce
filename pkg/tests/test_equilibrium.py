"""Stationary analytics: the mean product, the stationary density family,
its sampler, and the network fixed-point solvers."""

import math

import numpy as np
import pytest

from aimdmf import (
    RngStream,
    StationaryDistribution,
    detect_topology,
    ks_distance,
    load_model,
    loads_model,
    quad,
    solve_auto,
    solve_fixed_point,
    solve_linear_network,
    solve_single_node,
    solve_torus,
    stationary_density,
    unit_stationary_mean,
)
from aimdmf.equilibrium import SeriesError

from conftest import PSI, PSI_05_TWO_THIRDS, config_path, one_class_model


# ------------------------------------------------------------------- psi


def test_unit_mean_matches_frozen_oracle_values():
    for r, want in PSI.items():
        assert unit_stationary_mean(r) == pytest.approx(want, rel=1e-10)


def test_unit_mean_at_zero_is_gaussian_half_moment():
    assert unit_stationary_mean(0.0) == pytest.approx(
        math.sqrt(2.0 / math.pi), rel=1e-14
    )


def test_unit_mean_domain_is_capped():
    with pytest.raises(ValueError):
        unit_stationary_mean(-0.01)
    with pytest.raises(ValueError):
        unit_stationary_mean(0.9995)


def test_product_factors_bounded_and_mean_increasing():
    for r in (0.1, 0.3, 0.5, 0.7, 0.9):
        n = np.arange(1, 60)
        factors = (1.0 - r ** (2 * n)) / (1.0 - r ** (2 * n - 1))
        assert np.all(factors >= 1.0)
        # strictly above one until the powers drown in rounding
        live = r ** (2 * n - 1) > 1e-12
        assert np.all(factors[live] > 1.0)
        assert np.all(factors <= 1.0 / (1.0 - r) + 1e-15)
    grid = np.linspace(0.0, 0.95, 20)
    vals = [unit_stationary_mean(r) for r in grid]
    assert np.all(np.diff(vals) > 0.0)


# ----------------------------------------------------------------- density


@pytest.mark.parametrize("r", [0.3, 0.5, 0.7])
@pytest.mark.parametrize("rho", [0.5, 1.0, 2.0])
def test_density_normalization_and_mean(r, rho):
    cut = 20.0 / math.sqrt(rho)
    total = quad(lambda x: stationary_density(r, rho, x), 0.0, cut)
    assert total == pytest.approx(1.0, abs=1e-8)
    mean = quad(lambda x: x * stationary_density(r, rho, x), 0.0, 2.0 * cut)
    assert mean == pytest.approx(math.sqrt(rho) * PSI[r], abs=1e-6)


def test_density_scale_identity():
    xs = np.linspace(0.0, 6.0, 25)
    for r in (0.3, 0.6):
        for rho in (0.5, 2.0):
            s = math.sqrt(rho)
            for x in xs:
                lhs = stationary_density(r, 1.0, x)
                rhs = s * stationary_density(r, rho, s * x)
                assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


def test_density_nonnegative_on_fine_grid():
    xs = np.linspace(0.0, 8.0, 10_000)
    for r in (0.3, 0.5, 0.7):
        for rho in (0.5, 1.0, 2.0):
            vals = np.array([stationary_density(r, rho, x) for x in xs])
            assert np.all(vals >= -1e-12)


def test_density_high_r_uses_slow_exact_path():
    # beyond the float64-series comfort zone the evaluation must still be
    # nonnegative and normalized
    xs = np.linspace(0.0, 12.0, 800)
    vals = np.array([stationary_density(0.9, 1.0, x) for x in xs])
    assert np.all(vals >= -1e-12)
    assert np.trapezoid(vals, xs) == pytest.approx(1.0, abs=1e-4)


def test_density_rejects_bad_arguments():
    with pytest.raises(ValueError):
        stationary_density(0.5, -1.0, 1.0)
    with pytest.raises((ValueError, SeriesError)):
        stationary_density(0.9995, 1.0, 1.0)
    # the density is supported on the half line and vanishes below it
    assert stationary_density(0.5, 1.0, -1.0) == 0.0


# ------------------------------------------------------ CDF and sampling


def test_cdf_endpoints_and_median():
    dist = StationaryDistribution(0.5, 1.0)
    assert dist.cdf(0.0) == 0.0
    assert 1.0 - 1e-9 <= dist.cdf(50.0) <= 1.0 + 1e-9
    gen = RngStream(301).child("median").generator()
    draws = dist.sample(gen, 100_000)
    assert dist.cdf(np.median(draws)) == pytest.approx(0.5, abs=0.006)
    assert ks_distance(draws, dist.cdf) <= 0.006
    assert draws.mean() == pytest.approx(PSI[0.5], abs=0.01)


def test_distribution_mean_matches_scaled_product():
    for r in (0.3, 0.7):
        for rho in (0.5, 2.0):
            dist = StationaryDistribution(r, rho)
            assert dist.mean == pytest.approx(math.sqrt(rho) * PSI[r], abs=1e-6)


def test_quantile_is_generalized_inverse():
    # r = 0.7 has zero-mass cells near the origin: the quantile must pick
    # the infimum and round-trip through the CDF exactly
    for r in (0.5, 0.7):
        dist = StationaryDistribution(r, 1.0)
        qs = np.linspace(0.001, 0.999, 97)
        xs = dist.quantile(qs)
        assert np.all(np.diff(xs) >= 0.0)
        back = dist.cdf(xs)
        assert np.max(np.abs(back - qs)) <= 1e-9


def test_sampling_is_deterministic_per_stream():
    dist = StationaryDistribution(0.5, 1.0)
    a = dist.sample(RngStream(303).child("s").generator(), 5)
    b = dist.sample(RngStream(303).child("s").generator(), 5)
    assert np.array_equal(a, b)


# ----------------------------------------------------------- fixed points


def test_single_node_constant_beta_closed_form():
    c = 2.5
    model = one_class_model(rate=f'{{kind = "constant", c0 = {c}}}')
    law = solve_single_node(model)
    assert law.u_star[0] == pytest.approx(PSI[0.5] / math.sqrt(c), abs=1e-8)
    assert law.rho[0] == pytest.approx(1.0 / c, rel=1e-9)
    assert law.mean_throughput[0] == pytest.approx(
        PSI[0.5] / math.sqrt(c), abs=1e-8
    )


def test_single_node_linear_beta_closed_form():
    model = one_class_model(rate='{kind = "affine", c0 = 0.0, c1 = 1.0}')
    law = solve_single_node(model)
    assert law.u_star[0] == pytest.approx(PSI_05_TWO_THIRDS, abs=1e-8)
    general = solve_fixed_point(model)
    assert abs(general.u_star[0] - law.u_star[0]) <= 1e-8


def test_single_node_throughput_ratio_scales_with_sqrt_drift():
    model = loads_model(
        """
[network]
J = 1
K = 2
allocation = [1.0, 1.0]

[class.1]
r = 0.5
p = 0.5
drift = {kind = "constant", a = 4.0}
loss = {form = "multiplicative", scope = "aggregate", rate = {kind = "constant", c0 = 1.0}}

[class.2]
r = 0.5
p = 0.5
drift = {kind = "constant", a = 1.0}
loss = {form = "multiplicative", scope = "aggregate", rate = {kind = "constant", c0 = 1.0}}
"""
    )
    law = solve_single_node(model)
    ratio = law.mean_throughput[0] / law.mean_throughput[1]
    assert ratio == pytest.approx(2.0, abs=1e-8)


def test_multistart_finds_single_cluster_for_increasing_beta():
    model = one_class_model(rate='{kind = "affine", c0 = 0.3, c1 = 1.0}')
    law = solve_fixed_point(model, multistart=16)
    assert len(law.solutions) == 1
    assert np.max(law.residual) <= 1e-10


def test_nonreducible_single_node_falls_back_with_warning():
    model = loads_model(
        """
[network]
J = 1
K = 1
allocation = [1.0]

[class.1]
r = 0.5
p = 1.0
drift = {kind = "reciprocal", tau = 0.5, node_terms = [{kind = "affine", c0 = 0.0, c1 = 0.3}]}
loss = {form = "multiplicative", scope = "aggregate", rate = {kind = "affine", c0 = 0.5, c1 = 1.0}}
"""
    )
    with pytest.warns(UserWarning, match="falling back"):
        law = solve_single_node(model)
    assert law.method == "general"
    assert np.max(law.residual) <= 1e-9


def _linear_toml(p3, a3="0.8"):
    p12 = (1.0 - p3) / 2.0
    return f"""
[network]
J = 2
K = 3
allocation = [1.0, 0.0, 1.0, 0.0, 1.0, 1.0]

[class.1]
r = 0.5
p = {p12}
drift = {{kind = "constant", a = 1.0}}
loss = {{form = "multiplicative", scope = "aggregate", rate = {{kind = "affine", c0 = 0.4, c1 = 1.0}}}}

[class.2]
r = 0.6
p = {p12}
drift = {{kind = "constant", a = 1.5}}
loss = {{form = "multiplicative", scope = "aggregate", rate = {{kind = "affine", c0 = 0.3, c1 = 0.8}}}}

[class.3]
r = 0.5
p = {p3}
drift = {{kind = "constant", a = {a3}}}
loss = {{form = "multiplicative", scope = "aggregate", rate = {{kind = "affine", c0 = 0.2, c1 = 0.5}}}}
"""


def test_linear_with_weightless_long_class_decouples():
    law = solve_linear_network(loads_model(_linear_toml(0.0)))
    singles = []
    for (r, a, c0, c1) in ((0.5, 1.0, 0.4, 1.0), (0.6, 1.5, 0.3, 0.8)):
        # The network class carries weight p = 0.5, and utilization depends
        # on the drift only through psi(r) * p * sqrt(a).  A standalone
        # model has p = 1, so matching that product requires a' = p^2 * a.
        sub = one_class_model(
            r=r, a=0.25 * a, rate=f'{{kind = "affine", c0 = {c0}, c1 = {c1}}}'
        )
        singles.append(solve_single_node(sub).u_star[0])
    assert law.u_star == pytest.approx(singles, abs=1e-9)


def test_linear_symmetric_nodes_share_utilization():
    text = _linear_toml(0.2).replace("r = 0.6", "r = 0.5").replace(
        "a = 1.5", "a = 1.0"
    ).replace('c0 = 0.3, c1 = 0.8', 'c0 = 0.4, c1 = 1.0')
    law = solve_linear_network(loads_model(text))
    assert abs(law.u_star[0] - law.u_star[1]) <= 1e-10


def test_linear_shipped_config_cross_agreement():
    model = load_model(config_path("linear.cfg"))
    law = solve_linear_network(model)
    assert np.max(law.residual) <= 1e-9
    general = solve_fixed_point(model)
    assert np.max(np.abs(law.u_star - general.u_star)) <= 1e-7


def _torus_toml(alphas, c0=0.0):
    rows = []
    a_vals = [(alpha * 3.0 / PSI[0.5]) ** 2 for alpha in alphas]
    for k, a in enumerate(a_vals, start=1):
        rows.append(f"""
[class.{k}]
r = 0.5
p = 0.33333333333333331
drift = {{kind = "constant", a = {a!r}}}
loss = {{form = "multiplicative", scope = "aggregate", rate = {{kind = "affine", c0 = {c0}, c1 = 1.0}}}}
""")
    return f"""
[network]
J = 3
K = 3
allocation = [1.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0]
{''.join(rows)}
"""


def test_torus_symmetric_unit_utilization():
    alpha = 1.0 / math.sqrt(2.0)
    law = solve_torus(loads_model(_torus_toml([alpha] * 3)))
    assert law.u_star == pytest.approx([1.0, 1.0, 1.0], abs=1e-8)


def test_torus_symmetric_generic_alpha():
    alpha = 0.6
    law = solve_torus(loads_model(_torus_toml([alpha] * 3)))
    want = (math.sqrt(2.0) * alpha) ** (2.0 / 3.0)
    assert law.u_star == pytest.approx([want] * 3, abs=1e-8)
    general = solve_fixed_point(loads_model(_torus_toml([alpha] * 3)))
    assert np.max(np.abs(law.u_star - general.u_star)) <= 1e-7


def test_torus_asymmetric_cross_agreement():
    model = loads_model(_torus_toml([0.5, 0.7, 0.9], c0=0.1))
    law = solve_torus(model)
    assert np.max(law.residual) <= 1e-9
    general = solve_fixed_point(model)
    assert np.max(np.abs(law.u_star - general.u_star)) <= 1e-7
    assert "convention" in law.diagnostics


def test_shipped_topologies_are_detected_and_consistent():
    expected = {
        "single_node.cfg": "single_node",
        "linear.cfg": "linear",
        "torus3.cfg": "torus3",
    }
    for name, topo in expected.items():
        model = load_model(config_path(name))
        assert detect_topology(model) == topo
        law = solve_auto(model)
        assert np.max(law.residual) <= 1e-9
        assert np.all(law.rho > 0.0)
        general = solve_fixed_point(model)
        assert np.max(np.abs(law.u_star - general.u_star)) <= 1e-7
        for k in range(model.num_classes):
            assert law.distribution(k).mean == pytest.approx(
                law.mean_throughput[k], rel=1e-6
            )


def test_sample_initial_shapes_and_determinism(canonical_model):
    law = solve_auto(canonical_model)
    a = law.sample_initial(RngStream(307).child("init"), (5, 3))
    b = law.sample_initial(RngStream(307).child("init"), (5, 3))
    assert [v.size for v in a] == [5, 3]
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert all(np.all(v >= 0.0) for v in a)
