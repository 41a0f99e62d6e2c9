from __future__ import annotations

import math

import numpy as np
import pytest

from mfsim.backends import ToyModelParams, ToyPolicyBackend, softmax
from mfsim.corpus import generate_synthetic, self_exciting_config
from mfsim.ibtune import (
    CapabilityError,
    IBBatch,
    IBHyper,
    IBTriple,
    JointTable,
    LossCurves,
    TrainingError,
    build_ib_batch,
    expected_policy_nll,
    grad_meanfield_loss,
    hard_policy_nll,
    init_toy_params,
    kl_bound_check,
    load_toy_params,
    meanfield_loss,
    mutual_information,
    policy_nll,
    prior_row,
    rollout_symbols,
    save_toy_params,
    train_toy,
)


# --- finite-difference oracle ------------------------------------------------


def fd_gradient(loss_fn, logits: np.ndarray, h: float = 1e-5) -> np.ndarray:
    grad = np.zeros_like(logits)
    it = np.nditer(logits, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        original = logits[idx]
        logits[idx] = original + h
        up = loss_fn()
        logits[idx] = original - h
        down = loss_fn()
        logits[idx] = original
        grad[idx] = (up - down) / (2 * h)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    scale = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-6)
    return float(np.max(np.abs(a - b) / scale))


def random_instance(seed: int, n_s=3, n_a=3, n_m=4, n_triples=12):
    rng = np.random.default_rng(seed)
    mf = ToyModelParams(
        policy_logits=rng.normal(0, 1, (n_s, n_m, n_a)),
        meanfield_logits=rng.normal(0, 1, (n_m, n_a, n_m)),
        alphabets=(n_s, n_a, n_m),
    )
    prior = ToyModelParams(
        policy_logits=rng.normal(0, 1, (n_s, n_m, n_a)),
        meanfield_logits=rng.normal(0, 1, (n_m, n_a, n_m)),
        alphabets=(n_s, n_a, n_m),
    )
    raw = rng.random(n_triples)
    weights = raw / raw.sum()
    triples = tuple(
        IBTriple(
            prev_mf=int(rng.integers(n_m)),
            majority=int(rng.integers(n_a)),
            state=int(rng.integers(n_s)),
            action=int(rng.integers(n_a)),
            weight=float(w),
        )
        for w in weights
    )
    # normalize the float sum exactly
    total = sum(t.weight for t in triples)
    triples = tuple(
        IBTriple(t.prev_mf, t.majority, t.state, t.action, t.weight / total)
        for t in triples
    )
    return mf, prior, IBBatch(triples=triples)


# --- mutual information --------------------------------------------------------


def test_mi_product_joint_is_zero():
    px = np.array([0.3, 0.7])
    pz = np.array([0.25, 0.25, 0.5])
    assert mutual_information(np.outer(px, pz)) == pytest.approx(0.0, abs=1e-12)


def test_mi_correlated_binary():
    joint = np.array([[0.5, 0.0], [0.0, 0.5]])
    assert mutual_information(joint) == pytest.approx(math.log(2), abs=1e-12)


def test_mi_hand_example():
    joint = np.array([[0.4, 0.1], [0.1, 0.4]])
    expected = 0.8 * math.log(1.6) + 0.2 * math.log(0.4)
    assert mutual_information(joint) == pytest.approx(expected, abs=1e-12)


def test_mi_rejects_unnormalized():
    with pytest.raises(ValueError):
        mutual_information(np.array([[0.4, 0.4], [0.4, 0.4]]))
    with pytest.raises(ValueError):
        JointTable(np.array([[0.6, 0.6]]))


def test_mi_non_negative_on_random_tables():
    rng = np.random.default_rng(3)
    for _ in range(200):
        joint = rng.dirichlet(np.ones(12)).reshape(3, 4)
        assert mutual_information(joint) >= 0.0


# --- variational bound -----------------------------------------------------------


def random_bound_instance(seed: int, n_x=6, n_m=4):
    rng = np.random.default_rng(seed)
    cond = rng.dirichlet(np.ones(n_m), size=n_x)
    r = rng.dirichlet(np.ones(n_m))
    p_x = rng.dirichlet(np.ones(n_x))
    return cond, r, p_x


def test_bound_holds_on_random_instances():
    for seed in range(50):
        cond, r, p_x = random_bound_instance(seed)
        lhs, rhs = kl_bound_check(cond, r, p_x)
        assert lhs <= rhs + 1e-9


def test_bound_tight_when_prior_is_marginal():
    cond, _, p_x = random_bound_instance(123)
    marginal = p_x @ cond
    lhs, rhs = kl_bound_check(cond, marginal, p_x)
    assert lhs == pytest.approx(rhs, abs=1e-9)


def test_bound_deterministic_posterior_uniform_prior():
    # Posterior maps context x deterministically to symbol x % 4: the left side
    # is the entropy of the image distribution, the right side exactly ln 4.
    n_x, n_m = 6, 4
    cond = np.zeros((n_x, n_m))
    for x in range(n_x):
        cond[x, x % n_m] = 1.0
    p_x = np.full(n_x, 1 / n_x)
    r = np.full(n_m, 0.25)
    lhs, rhs = kl_bound_check(cond, r, p_x)
    image = np.zeros(n_m)
    for x in range(n_x):
        image[x % n_m] += p_x[x]
    entropy = -np.sum(image * np.log(image))
    assert lhs == pytest.approx(entropy, abs=1e-12)
    assert rhs == pytest.approx(math.log(4), abs=1e-12)
    assert lhs <= rhs


def test_bound_accepts_toy_params():
    params = init_toy_params(3, 3, 4, seed=5, scale=1.0)
    prior = init_toy_params(3, 3, 4, seed=6, scale=1.0)
    n_x = 4 * 3
    p_x = np.random.default_rng(0).dirichlet(np.ones(n_x))
    lhs, rhs = kl_bound_check(params, prior, p_x)
    assert lhs <= rhs + 1e-9


# --- policy NLL --------------------------------------------------------------------


def test_policy_nll_uniform():
    params = ToyModelParams.zeros(2, 4, 2)
    data = [(0, 0, 1), (1, 1, 3), (0, 1, 0)]
    assert policy_nll(params, data) == pytest.approx(math.log(4), abs=1e-12)


def test_policy_nll_concentrated():
    params = ToyModelParams.zeros(1, 4, 1)
    # probability 0.9 on action 0 for every condition
    row = np.log(np.array([0.9, 0.1 / 3, 0.1 / 3, 0.1 / 3]))
    params.policy_logits[0, 0] = row
    assert policy_nll(params, [(0, 0, 0)]) == pytest.approx(-math.log(0.9), abs=1e-12)


def test_policy_nll_hand_mixture():
    params = ToyModelParams.zeros(1, 2, 2)
    params.policy_logits[0, 0] = np.log(np.array([0.5, 0.5]))
    params.policy_logits[0, 1] = np.log(np.array([0.25, 0.75]))
    value = policy_nll(params, [(0, 0, 0), (0, 1, 0)])
    assert value == pytest.approx((math.log(2) + math.log(4)) / 2, abs=1e-12)


def test_policy_nll_backend_and_capability():
    params = ToyModelParams.zeros(2, 4, 2)
    backend = ToyPolicyBackend(params)
    assert policy_nll(backend, [(0, 0, 1)]) == pytest.approx(math.log(4), abs=1e-12)
    backend.supports_logprob = False
    with pytest.raises(CapabilityError):
        policy_nll(backend, [(0, 0, 1)])
    with pytest.raises(ValueError):
        policy_nll(params, [])


# --- mean-field loss ----------------------------------------------------------------


def two_symbol_example():
    # one context; posterior (0.75, 0.25); prior rows uniform; policy log-liks
    # (-0.2, -1.0) for the observed action
    n_s, n_a, n_m = 1, 2, 2
    mf = ToyModelParams.zeros(n_s, n_a, n_m)
    mf.meanfield_logits[0, 0] = np.log(np.array([0.75, 0.25]))
    prior = ToyModelParams.zeros(n_s, n_a, n_m)
    policy = ToyModelParams.zeros(n_s, n_a, n_m)
    policy.policy_logits[0, 0] = np.array([-0.2, np.log(1 - math.exp(-0.2))])
    policy.policy_logits[0, 1] = np.array([-1.0, np.log(1 - math.exp(-1.0))])
    # make the rows exact log-distributions so log pi(a=0 | s, m) is exact
    batch = IBBatch(triples=(IBTriple(0, 0, 0, 0, 1.0),))
    return mf, prior, policy, batch


def test_meanfield_loss_hand_example():
    mf, prior, policy, batch = two_symbol_example()
    kl = 0.75 * math.log(1.5) + 0.25 * math.log(0.5)
    expected = kl - 2.0 * (0.75 * -0.2 + 0.25 * -1.0)
    value = meanfield_loss(mf, prior, policy, batch, beta=2.0)
    assert value == pytest.approx(expected, abs=1e-9)
    assert value == pytest.approx(0.9308, abs=2e-4)


def test_meanfield_loss_zero_kl_when_posterior_equals_prior():
    mf, _, policy, batch = two_symbol_example()
    prior = mf.copy()
    value = meanfield_loss(mf, prior, policy, batch, beta=2.0)
    expected = -2.0 * (0.75 * -0.2 + 0.25 * -1.0)
    assert value == pytest.approx(expected, abs=1e-12)


def test_meanfield_loss_default_beta_is_two():
    assert IBHyper().beta == 2.0


def test_meanfield_loss_rejects_alphabet_mismatch():
    mf, prior, policy, batch = two_symbol_example()
    other = ToyModelParams.zeros(2, 2, 2)
    with pytest.raises(ValueError):
        meanfield_loss(mf, prior, other, batch, beta=2.0)


def test_batch_weights_must_normalize():
    with pytest.raises(ValueError):
        IBBatch(triples=(IBTriple(0, 0, 0, 0, 0.5), IBTriple(0, 0, 0, 1, 0.6)))
    with pytest.raises(ValueError):
        IBBatch(triples=())


# --- gradients ------------------------------------------------------------------------


def test_gradient_zero_at_stationary_point():
    # posterior equals the prior with identical rows, policy ignoring the
    # summary: the objective is flat
    n_s, n_a, n_m = 2, 2, 3
    mf = ToyModelParams.zeros(n_s, n_a, n_m)
    prior = ToyModelParams.zeros(n_s, n_a, n_m)
    policy = ToyModelParams.zeros(n_s, n_a, n_m)
    policy.policy_logits[:, :, 1] = 0.7  # varies by action, constant over m
    batch = IBBatch.uniform([(0, 0, 0, 1), (1, 1, 1, 0), (2, 0, 1, 1)])
    grad = grad_meanfield_loss(mf, prior, policy, batch, beta=2.0)
    assert np.max(np.abs(grad)) < 1e-8


def test_gradient_matches_finite_differences_seed3():
    mf, prior, batch = random_instance(seed=3)
    policy = mf
    analytic = grad_meanfield_loss(mf, prior, policy, batch, beta=2.0)
    fd = fd_gradient(lambda: meanfield_loss(mf, prior, policy, batch, beta=2.0),
                     mf.meanfield_logits)
    assert relative_error(analytic, fd) < 1e-4


def test_gradient_matches_finite_differences_many_seeds():
    for seed in range(10):
        mf, prior, batch = random_instance(seed=seed)
        analytic = grad_meanfield_loss(mf, prior, mf, batch, beta=0.7)
        fd = fd_gradient(lambda: meanfield_loss(mf, prior, mf, batch, beta=0.7),
                         mf.meanfield_logits)
        assert relative_error(analytic, fd) < 1e-4


def test_gradient_invariant_to_row_logit_shift():
    mf, prior, batch = random_instance(seed=8)
    g1 = grad_meanfield_loss(mf, prior, mf, batch, beta=2.0)
    shifted = mf.copy()
    shifted.meanfield_logits[0, 0] += 3.5
    g2 = grad_meanfield_loss(shifted, prior, shifted, batch, beta=2.0)
    assert np.allclose(g1, g2, atol=1e-10)


def test_policy_gradient_matches_finite_differences():
    from mfsim.ibtune import grad_policy_expected_nll
    mf, prior, batch = random_instance(seed=5)
    analytic = grad_policy_expected_nll(mf, mf, batch)
    fd = fd_gradient(lambda: expected_policy_nll(mf, mf, batch), mf.policy_logits)
    assert relative_error(analytic, fd) < 1e-4


def test_hard_policy_gradient_matches_finite_differences():
    from mfsim.ibtune import grad_hard_policy_nll
    mf, prior, batch = random_instance(seed=6)
    symbols = rollout_symbols(batch, mf)
    analytic = grad_hard_policy_nll(mf, batch, symbols)
    fd = fd_gradient(lambda: hard_policy_nll(mf, batch, symbols), mf.policy_logits)
    assert relative_error(analytic, fd) < 1e-4


# --- training -----------------------------------------------------------------------


def small_corpus(seed=11):
    cfg = self_exciting_config(seed=seed, num_events=6, steps_per_event=16,
                               agents_per_step=8)
    return generate_synthetic(cfg)


def test_train_zero_iterations_returns_init():
    corpus = small_corpus()
    hyper = IBHyper(iterations=0, seed=4)
    params, curves = train_toy(corpus, hyper, "full_ibtune", block_size=8)
    init = init_toy_params(4, 4, 8, seed=4)
    assert np.array_equal(params.policy_logits, init.policy_logits)
    assert np.array_equal(params.meanfield_logits, init.meanfield_logits)
    assert curves.rows == ()


def test_train_no_meanfield_returns_untrained():
    corpus = small_corpus()
    hyper = IBHyper(iterations=100, seed=4)
    params, curves = train_toy(corpus, hyper, "no_meanfield", block_size=8)
    init = init_toy_params(4, 4, 8, seed=4)
    assert np.array_equal(params.policy_logits, init.policy_logits)
    assert curves.rows == ()


def test_train_full_reduces_policy_nll():
    corpus = small_corpus()
    hyper = IBHyper(beta=2.0, learning_rate=0.5, iterations=150, seed=1)
    params, curves = train_toy(corpus, hyper, "full_ibtune", block_size=8)
    first = curves.rows[0][2]
    last = curves.rows[-1][2]
    assert last < first


def test_train_deterministic_per_seed(tmp_path):
    corpus = small_corpus()
    hyper = IBHyper(beta=2.0, learning_rate=0.5, iterations=40, seed=9)
    p1, c1 = train_toy(corpus, hyper, "full_ibtune", block_size=8)
    p2, c2 = train_toy(corpus, hyper, "full_ibtune", block_size=8)
    assert np.array_equal(p1.policy_logits, p2.policy_logits)
    assert np.array_equal(p1.meanfield_logits, p2.meanfield_logits)
    assert c1.rows == c2.rows
    save_toy_params(p1, tmp_path / "a.json")
    save_toy_params(p2, tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_train_sft_never_touches_meanfield_logits():
    corpus = small_corpus()
    hyper = IBHyper(learning_rate=0.5, iterations=60, seed=2)
    params, curves = train_toy(corpus, hyper, "policy_only_sft", block_size=8)
    init = init_toy_params(4, 4, 8, seed=2)
    assert np.array_equal(params.meanfield_logits, init.meanfield_logits)
    # the summary input is marginalized out: all slices identical
    assert np.allclose(params.policy_logits[:, 0, :], params.policy_logits[:, 3, :])
    assert all(row[1] is None for row in curves.rows)


def test_loss_curves_monotone_after_smoothing():
    corpus = small_corpus()
    hyper = IBHyper(beta=2.0, learning_rate=0.5, iterations=150, seed=1)
    _, curves = train_toy(corpus, hyper, "full_ibtune", block_size=8)
    for column in (1, 2):
        series = np.array([row[column] for row in curves.rows])
        smoothed = np.convolve(series, np.ones(10) / 10, mode="valid")
        assert np.all(np.diff(smoothed) <= 1e-6)


def test_train_divergence_raises_training_error():
    corpus = small_corpus()
    hyper = IBHyper(beta=2.0, learning_rate=math.inf, iterations=50, seed=1)
    with pytest.raises(TrainingError) as excinfo:
        train_toy(corpus, hyper, "full_ibtune", block_size=8)
    assert "iteration 0" in str(excinfo.value)


def test_beta_zero_limit_stays_near_prior():
    corpus = small_corpus()
    hyper = IBHyper(beta=1e-6, learning_rate=0.5, iterations=100, seed=3)
    params, _ = train_toy(corpus, hyper, "full_ibtune", block_size=8,
                          init_scale=0.01)
    prior = init_toy_params(4, 4, 8, seed=3, scale=0.01)
    mu = softmax(params.meanfield_logits)
    r = softmax(prior.meanfield_logits)
    kl_rows = (mu * (np.log(mu) - np.log(r))).sum(axis=2)
    assert kl_rows.max() < 1e-3


def test_large_beta_fits_actions_better_than_tiny_beta():
    corpus = small_corpus(seed=11)
    results = {}
    for beta in (0.01, 50.0):
        hyper = IBHyper(beta=beta, learning_rate=0.5, iterations=200, seed=1)
        params, curves = train_toy(corpus, hyper, "full_ibtune", block_size=8)
        batch = build_ib_batch(corpus, params, 8)
        results[beta] = {
            "hard": curves.rows[-1][2],
            "expected": expected_policy_nll(params, params, batch),
        }
    assert results[50.0]["hard"] < results[0.01]["hard"]
    assert results[50.0]["expected"] < results[0.01]["expected"] - 0.05


def test_params_roundtrip(tmp_path):
    params = init_toy_params(3, 4, 5, seed=7)
    save_toy_params(params, tmp_path / "p.json")
    loaded = load_toy_params(tmp_path / "p.json")
    assert loaded.alphabets == (3, 4, 5)
    assert np.array_equal(loaded.policy_logits, params.policy_logits)
    assert np.array_equal(loaded.meanfield_logits, params.meanfield_logits)


def test_loss_curves_csv(tmp_path):
    curves = LossCurves(rows=((0, 1.5, 2.5), (1, None, 2.0)))
    curves.save_csv(tmp_path / "c.csv")
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "iteration,meanfield_loss,policy_loss"
    assert lines[1].startswith("0,1.5")
    assert lines[2].startswith("1,,2.0")


def test_prior_row_is_batch_weighted_marginal():
    prior = init_toy_params(2, 2, 3, seed=1, scale=1.0)
    batch = IBBatch.uniform([(0, 0, 0, 0), (1, 1, 0, 1)])
    rho = prior_row(prior, batch)
    rows = softmax(prior.meanfield_logits)
    expected = 0.5 * rows[0, 0] + 0.5 * rows[1, 1]
    assert np.allclose(rho, expected)
    assert rho.sum() == pytest.approx(1.0, abs=1e-12)
