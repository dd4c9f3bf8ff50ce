"""Network model arithmetic: utilization, rates, and hypothesis checks."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aimdmf import (
    ClassSpec,
    ConstantDrift,
    GeneralLoss,
    ModelError,
    MultiplicativeLoss,
    NetworkModel,
    ReciprocalDrift,
    ScalarRate,
    class_beta,
    eval_drift,
    eval_loss,
    limit_utilization,
    loads_model,
    utilization,
    validate_hypotheses,
)

AFFINE = ScalarRate("affine", 0.0, 1.0)
CONST1 = ScalarRate("constant", 1.0)


def _mult(rate=CONST1):
    return MultiplicativeLoss(scope="aggregate", rate=rate)


def _class(r=0.5, p=1.0, a=1.0, loss=None):
    return ClassSpec(r=r, p=p, drift=ConstantDrift(a), loss=loss or _mult())


# ------------------------------------------------------------ utilization


def test_utilization_zero_states_gives_zero():
    model = NetworkModel(
        allocation=[[1.0, 0.0], [1.0, 1.0]],
        classes=(_class(p=0.5), _class(p=0.5)),
    )
    states = [np.zeros(3), np.zeros(5)]
    assert np.array_equal(utilization(states, model), np.zeros(2))


def test_utilization_single_class_is_scaled_mean():
    model = NetworkModel(allocation=[[1.0]], classes=(_class(),))
    assert utilization([np.array([3.0, 5.0])], model) == pytest.approx([4.0])


def test_utilization_two_node_hand_value():
    model = NetworkModel(
        allocation=[[1.0, 0.0], [1.0, 1.0]],
        classes=(_class(p=0.5), _class(p=0.5)),
    )
    states = [np.array([2.0, 2.0]), np.array([4.0, 4.0])]
    assert utilization(states, model) == pytest.approx([1.0, 3.0])


def test_utilization_weights_by_population_share_not_p():
    # declared p is irrelevant here: only the realized counts matter
    model = NetworkModel(
        allocation=[[1.0, 1.0]], classes=(_class(p=0.9), _class(p=0.1))
    )
    states = [np.array([2.0]), np.array([4.0, 4.0, 4.0])]
    assert utilization(states, model) == pytest.approx([0.25 * 2.0 + 0.75 * 4.0])


def test_limit_utilization_hand_values():
    model = NetworkModel(
        allocation=[[1.0, 1.0]], classes=(_class(p=0.25), _class(p=0.75))
    )
    assert limit_utilization(np.zeros(2), model) == pytest.approx([0.0])
    assert limit_utilization(np.array([4.0, 8.0]), model) == pytest.approx([7.0])


def test_limit_utilization_identity_for_one_full_class():
    model = NetworkModel(allocation=[[1.0]], classes=(_class(p=1.0),))
    for m in (0.0, 0.7, 3.2):
        assert limit_utilization(np.array([m]), model) == pytest.approx([m])


def test_empirical_matches_limit_when_counts_track_p():
    model = NetworkModel(
        allocation=[[1.0, 1.0]], classes=(_class(p=0.25), _class(p=0.75))
    )
    states = [np.full(2, 1.3), np.full(6, 2.9)]
    emp = utilization(states, model)
    lim = limit_utilization(np.array([1.3, 2.9]), model)
    assert np.max(np.abs(emp - lim)) <= 1e-12


# ------------------------------------------------------------ rate eval


def test_multiplicative_loss_vanishes_at_zero_state():
    model = NetworkModel(allocation=[[1.0]], classes=(_class(),))
    assert eval_loss(model, 0, 0.0, np.array([2.0])) == 0.0


def test_reciprocal_drift_with_vanishing_terms_is_one_over_tau():
    drift = ReciprocalDrift(tau=2.5, node_terms=(ScalarRate("constant", 0.0),))
    cls = ClassSpec(r=0.5, p=1.0, drift=drift, loss=_mult())
    model = NetworkModel(allocation=[[1.0]], classes=(cls,))
    assert eval_drift(model, 0, np.array([0.0])) == pytest.approx(1.0 / 2.5)


def test_per_node_beta_sums_delta_and_node_terms():
    loss = MultiplicativeLoss(
        scope="per_node", delta=0.1, node_terms=(AFFINE,)
    )
    model = NetworkModel(allocation=[[1.0]], classes=(_class(loss=loss),))
    u = np.array([0.9])
    assert class_beta(model, 0, u) == pytest.approx(1.0)
    assert eval_loss(model, 0, 2.0, u) == pytest.approx(2.0)


def test_constant_drift_ignores_utilization():
    model = NetworkModel(allocation=[[1.0]], classes=(_class(a=1.7),))
    vals = {eval_drift(model, 0, np.array([u])) for u in (0.0, 1.0, 1e6)}
    assert vals == {1.7}


def test_general_loss_factorizes():
    loss = GeneralLoss(
        w_rate=ScalarRate("power", 0.0, 1.0, 2.0),
        monotone_in_w=True,
        delta=0.5,
        node_terms=(AFFINE,),
    )
    model = NetworkModel(allocation=[[1.0]], classes=(_class(loss=loss),))
    assert eval_loss(model, 0, 3.0, np.array([1.5])) == pytest.approx(9.0 * 2.0)


@settings(max_examples=100, deadline=None)
@given(
    w=st.floats(0.0, 1e6),
    u=st.floats(0.0, 1e6),
    c0=st.floats(0.0, 10.0),
    c1=st.floats(0.0, 10.0),
)
def test_rates_nonnegative_and_finite(w, u, c0, c1):
    rate = ScalarRate("affine", c0, c1)
    model = NetworkModel(allocation=[[1.0]], classes=(_class(loss=_mult(rate)),))
    b = eval_loss(model, 0, w, np.array([u]))
    a = eval_drift(model, 0, np.array([u]))
    assert np.isfinite(b) and b >= 0.0
    assert np.isfinite(a) and a > 0.0


# -------------------------------------------------------- hypothesis report


def test_hypotheses_multiplicative_affine_needs_gaussian_tail():
    model = NetworkModel(
        allocation=[[1.0]],
        classes=(_class(loss=_mult(ScalarRate("affine", 0.5, 1.0))),),
    )
    rep = validate_hypotheses(model)
    assert rep.per_class[0].condition_c_branch == 2
    assert rep.per_class[0].required_tail == "gaussian"
    assert not rep.warnings


def test_hypotheses_constant_beta_is_jointly_lipschitz():
    model = NetworkModel(allocation=[[1.0]], classes=(_class(),))
    rep = validate_hypotheses(model)
    assert rep.per_class[0].condition_c_branch == 1
    assert rep.per_class[0].required_tail == "exponential"


def test_hypotheses_flags_sublinear_power_rate():
    loss = MultiplicativeLoss(
        scope="per_node",
        delta=0.1,
        node_terms=(ScalarRate("power", 0.0, 1.0, 0.5),),
    )
    model = NetworkModel(allocation=[[1.0]], classes=(_class(loss=loss),))
    rep = validate_hypotheses(model)
    assert not rep.per_class[0].loss_lipschitz
    assert any("Lipschitz" in w for w in rep.warnings)


def test_drift_bound_covers_constant_and_reciprocal():
    drift = ReciprocalDrift(tau=0.5, node_terms=(ScalarRate("constant", 1.5),))
    cls = ClassSpec(r=0.5, p=1.0, drift=drift, loss=_mult())
    model = NetworkModel(allocation=[[1.0]], classes=(cls, ))
    rep = validate_hypotheses(model)
    assert rep.per_class[0].drift_bound == pytest.approx(0.5)


# ------------------------------------------------------ model validation


def test_weights_must_sum_to_one():
    with pytest.raises(ModelError):
        NetworkModel(
            allocation=[[1.0, 1.0]], classes=(_class(p=0.5), _class(p=0.6))
        )


def test_counts_must_be_positive_integers():
    with pytest.raises(ModelError):
        NetworkModel(allocation=[[1.0]], classes=(_class(),), counts=(0,))


def test_node_terms_must_vanish_at_unused_nodes():
    loss = MultiplicativeLoss(scope="per_node", delta=0.1, node_terms=(AFFINE,))
    with pytest.raises(ModelError):
        NetworkModel(allocation=[[0.0]], classes=(_class(loss=loss),))


def test_scalar_rate_validation():
    with pytest.raises(ModelError):
        ScalarRate("affine", -0.1, 1.0)
    with pytest.raises(ModelError):
        ScalarRate("affine", 0.1, -1.0)
    with pytest.raises(ModelError):
        ScalarRate("power", 0.1, 1.0, 0.0)
    with pytest.raises(ModelError):
        ScalarRate("sqrt", 0.0, 1.0)


def test_class_spec_validation():
    with pytest.raises(ModelError):
        ClassSpec(r=1.0, p=1.0, drift=ConstantDrift(1.0), loss=_mult())
    with pytest.raises(ModelError):
        ClassSpec(r=0.5, p=-0.1, drift=ConstantDrift(1.0), loss=_mult())


def test_loaded_and_constructed_models_agree():
    lhs = loads_model(
        """
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
    )
    rhs = NetworkModel(allocation=[[1.0]], classes=(_class(),))
    u = np.array([0.7])
    assert eval_loss(lhs, 0, 2.0, u) == eval_loss(rhs, 0, 2.0, u)
    assert eval_drift(lhs, 0, u) == eval_drift(rhs, 0, u)
