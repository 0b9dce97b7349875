from __future__ import annotations

import numpy as np
import pytest

from eitmcmc.experiment.toy import ToyPosterior
from eitmcmc.posterior import Evaluation, Receipt
from eitmcmc.samplers import (AMSDADriver, ChainState, ConfigurationError, CoupledDriver, DADriver, MSDADriver,
                              RunSettings, RwmDriver, RwmProposal, ScaleTuner, SingleSiteDriver, Trace, accept,
                              da_sweep, metropolis_coupled_step, msda_step, rwm_step, run, single_site_sweep,
                              tune_scale)
from eitmcmc.samplers.runner import chain_rngs


class FixedNormals:
    """Generator stand-in whose normal draws come from a list."""

    def __init__(self, normals, seed=0):
        self._normals = list(normals)
        self._rng = np.random.default_rng(seed)

    def standard_normal(self, size=None):
        return self._normals.pop(0)

    def random(self):
        return self._rng.random()

    def integers(self, n):
        return self._rng.integers(n)


@pytest.fixture(scope="module")
def toy():
    return ToyPosterior()


def _state(x, seed=1):
    return ChainState(np.asarray(x, dtype=float), np.random.default_rng(seed))


def test_accept_edge_cases():
    rng = np.random.default_rng(0)
    before = rng.bit_generator.state
    assert accept(rng, 0.0) and accept(rng, 3.0)
    assert not accept(rng, -np.inf) and not accept(rng, np.nan)
    assert rng.bit_generator.state == before


def test_zero_increment_is_accepted(toy):
    post = toy.posterior("fine")
    st = ChainState(np.full(4, 3.0), FixedNormals([0.0] * 4))
    single_site_sweep(st, post, 0.5)
    assert st.tallies["stage1"].accepted == 4


def test_out_of_support_costs_nothing(toy):
    post = toy.posterior("fine")
    st = ChainState(np.full(4, 4.4), FixedNormals([1.0] * 4))
    st.evaluation(post)
    calls = post.model.calls
    single_site_sweep(st, post, 0.5)
    assert post.model.calls == calls and st.counters.fine == 1
    assert st.tallies["stage1"].accepted == 0
    np.testing.assert_array_equal(st.x, 4.4)


def test_rwm_out_of_support_costs_nothing(toy):
    post = toy.posterior("fine")
    st = _state(np.full(4, 4.4))
    st.evaluation(post)
    calls = post.model.calls
    for _ in range(20):
        rwm_step(st, post, RwmProposal(np.eye(4), 100.0))  # sd 10: leaves the box
    assert post.model.calls == calls and st.counters.fine == 1
    assert st.tallies["stage1"].accepted == 0


def test_rwm_vanishing_step(toy):
    post = toy.posterior("fine")
    st = _state(np.full(4, 3.3))
    prop = RwmProposal.identity(4, 1e-12)
    for _ in range(1000):
        rwm_step(st, post, prop)
    assert st.tallies["stage1"].rate > 0.99


def test_rwm_covariance_validation():
    with pytest.raises(ConfigurationError):
        RwmProposal(np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(ConfigurationError):
        RwmProposal(np.array([[1.0, 0.5], [0.0, 1.0]]))
    with pytest.raises(ConfigurationError):
        RwmProposal(np.eye(2), alpha=0.0)
    # semi-definite is fine
    p = RwmProposal(np.array([[1.0, 1.0], [1.0, 1.0]]))
    d = p.draw(np.random.default_rng(0))
    assert d[0] == pytest.approx(d[1])


def test_sweep_validates_order(toy):
    with pytest.raises(ConfigurationError):
        single_site_sweep(_state(np.full(4, 3.0)), toy.posterior("fine"), 0.5, order="spiral")
    with pytest.raises(ConfigurationError):
        single_site_sweep(_state(np.full(4, 3.0)), toy.posterior("fine"), 0.0)


@pytest.mark.parametrize("order", ["deterministic", "random"])
def test_da_with_exact_surrogate_reproduces_single_site(toy, order):
    fine = toy.posterior("fine")
    same = toy.posterior("fine")
    a, b = _state(np.full(4, 3.0), 7), _state(np.full(4, 3.0), 7)
    for _ in range(300):
        single_site_sweep(a, fine, 0.6, order)
        da_sweep(b, fine, same, 0.6, order)
        np.testing.assert_array_equal(a.x, b.x)
    assert b.tallies["stage2"].rate == 1.0


def test_da_fine_evals_equal_first_stage_passes(toy):
    fine, coarse = toy.posterior("fine"), toy.posterior("coarse")
    st = _state(np.full(4, 3.0))
    st.evaluation(fine)
    st.evaluation(coarse)
    for _ in range(200):
        da_sweep(st, fine, coarse, 0.8)
    t1, t2 = st.tallies["stage1"], st.tallies["stage2"]
    # one fine solve per first-stage pass, plus the initial evaluation
    assert st.counters.fine - 1 == t1.accepted == t2.proposed
    # out-of-support proposals are rejected before the surrogate solve
    assert st.counters.coarse - 1 <= t1.proposed


def test_msda_single_step_matches_random_scan_da(toy):
    fine, coarse = toy.posterior("fine"), toy.posterior("coarse")
    a, b = _state(np.full(4, 3.0), 11), _state(np.full(4, 3.0), 11)
    for _ in range(200):
        da_sweep(a, fine, coarse, 0.7, "random")
        for _ in range(4):
            msda_step(b, fine, coarse, 1, 0.7)
        np.testing.assert_array_equal(a.x, b.x)
    assert a.counters.fine == b.counters.fine


def test_msda_exact_surrogate_always_accepts(toy):
    fine = toy.posterior("fine")
    st = _state(np.full(4, 3.0))
    for _ in range(300):
        msda_step(st, fine, toy.posterior("fine"), 5, 0.5)
    assert st.tallies["stage2"].rate == 1.0


def test_msda_no_move_skips_fine_solve(toy):
    fine, coarse = toy.posterior("fine"), toy.posterior("coarse")
    st = ChainState(np.full(4, 4.4), FixedNormals([5.0] * 3))
    st.evaluation(fine)
    st.evaluation(coarse)
    msda_step(st, fine, coarse, 3, 0.5)
    assert st.counters.fine == 1 and st.tallies["stage2"].proposed == 0


def test_msda_fine_evals_equal_moved_proposals(toy):
    fine, coarse = toy.posterior("fine"), toy.posterior("coarse")
    st = _state(np.full(4, 3.0))
    st.evaluation(fine)
    st.evaluation(coarse)
    for _ in range(300):
        msda_step(st, fine, coarse, 3, 0.3)
    assert st.counters.fine - 1 == st.tallies["stage2"].proposed
    assert st.counters.coarse - 1 <= st.tallies["stage1"].proposed == 900


class ThreeLevel:
    """One-dimensional quantised target with three cells on [0, 3]."""

    cache_key = "three"
    dim = 1

    def __init__(self, logw):
        self.logw = np.asarray(logw, dtype=float)

    def evaluate(self, theta):
        v = theta[0]
        if not 0.0 <= v <= 3.0:
            return Evaluation(-np.inf, -np.inf)
        return Evaluation(float(self.logw[min(int(v), 2)]), 0.0, np.zeros(1), Receipt(coarse=1))

    def evaluate_site(self, theta, i, value, current):
        t = theta.copy()
        t[i] = value
        return self.evaluate(t)


def test_inner_walk_is_reversible():
    target = ThreeLevel([0.0, -0.7, -1.5])
    st = _state([0.5], 5)
    cells = []
    for _ in range(30000):
        msda_step(st, target, target, 4, 0.8)
        cells.append(min(int(st.x[0]), 2))
    cells = np.array(cells)
    N = np.zeros((3, 3))
    np.add.at(N, (cells[:-1], cells[1:]), 1)
    for a, b in ((0, 1), (0, 2), (1, 2)):
        assert abs(N[a, b] - N[b, a]) < 4 * np.sqrt(N[a, b] + N[b, a]) + 1
    p = np.exp(target.logw) / np.exp(target.logw).sum()
    np.testing.assert_allclose(np.bincount(cells, minlength=3) / len(cells), p, atol=0.03)


def test_coupled_swap_identical_states(toy):
    fine = toy.posterior("fine")
    a, b = _state(np.full(4, 3.0), 1), _state(np.full(4, 3.0), 1)
    # same stream and same posterior: both chains take identical paths
    _, _, out = metropolis_coupled_step(a, b, fine, toy.posterior("fine"), r=1)
    assert out.accepted and out.log_ratio == 0.0


def test_coupled_swap_ratio_one_for_identical_models(toy):
    a, b = _state(np.full(4, 3.0), 1), _state(np.full(4, 4.0), 2)
    for _ in range(20):
        _, _, out = metropolis_coupled_step(a, b, toy.posterior("fine"), toy.posterior("fine"), r=3)
        assert out.accepted and abs(out.log_ratio) < 1e-9


def test_coupled_rejects_bad_ratio(toy):
    with pytest.raises(ConfigurationError):
        metropolis_coupled_step(_state(np.full(4, 3.0)), _state(np.full(4, 3.0)), toy.posterior("fine"),
                                toy.posterior("coarse"), r=0)


def test_cache_matches_fresh_evaluation(toy):
    fine, coarse = toy.posterior("fine"), toy.posterior("coarse")
    st = _state(np.full(4, 3.0))
    for _ in range(50):
        da_sweep(st, fine, coarse, 0.8)
        for post in (fine, coarse):
            assert st.cache[post.cache_key].logp == pytest.approx(post.evaluate(st.x).logp, abs=1e-10)


# -- tuning -------------------------------------------------------------------


def test_tuner_fixed_point():
    t = ScaleTuner(0.5, target=0.45, window=100)
    for _ in range(5):
        before = t.scale
        t.observe(45, 100)
        assert abs(t.scale / before - 1) < 0.01


def test_tuner_frozen_and_round_trip():
    t = ScaleTuner(1.0, target=0.3, window=10)
    t.observe(1, 25)
    u = ScaleTuner.from_dict(t.to_dict())
    assert u.to_dict() == t.to_dict()
    t.freeze()
    s = t.scale
    t.observe(10, 10)
    assert t.scale == s
    with pytest.raises(ConfigurationError):
        ScaleTuner(1.0, target=1.0)


def _gaussian_metropolis(dim, rng, n=100):
    x = np.zeros(dim)

    def kernel(scale):
        nonlocal x
        acc = 0
        for _ in range(n):
            y = x + scale * rng.standard_normal(dim)
            if np.log(rng.random()) < 0.5 * (x @ x - y @ y):
                x, acc = y, acc + 1
        return acc, n
    return kernel


def test_tuner_shrinks_oversized_steps():
    rng = np.random.default_rng(2)
    kernel = _gaussian_metropolis(1, rng)
    scale, tuner = tune_scale(kernel, 240.0, 0.45, window=100, n_windows=3)
    assert tuner.history[0] < 0.05
    traj = [240.0]
    t = ScaleTuner(240.0, 0.45, 100)
    for _ in range(3):
        t.observe(*kernel(t.scale))
        traj.append(t.scale)
    assert all(b < a for a, b in zip(traj, traj[1:]))


def test_tuner_reaches_target_in_ten_dimensions():
    rng = np.random.default_rng(4)
    kernel = _gaussian_metropolis(10, rng)
    scale, tuner = tune_scale(kernel, 0.1, 0.3, window=200, n_windows=60)
    acc = sum(kernel(scale)[0] for _ in range(40))
    assert 0.25 <= acc / 4000 <= 0.35
    assert 0.25 <= np.mean(tuner.history[-10:]) <= 0.35


# -- run ----------------------------------------------------------------------


def _driver(kind, toy, seed=3):
    rngs = chain_rngs(seed, 2)
    fine, approx, coarse = toy.posterior("fine"), toy.posterior("approx"), toy.posterior("coarse")
    x0 = np.full(4, 3.0)
    return {
        "single_site": lambda: SingleSiteDriver(fine, x0, rngs[0]),
        "rwm": lambda: RwmDriver(fine, x0, rngs[0], alpha=0.3),
        "da": lambda: DADriver(fine, approx, x0, rngs[0]),
        "msda": lambda: MSDADriver(fine, coarse, x0, rngs[0], n_step=5),
        "amsda": lambda: AMSDADriver(fine, coarse, x0, rngs[0], n_step=5, refresh_every=3),
        "coupled": lambda: CoupledDriver(fine, approx, x0, rngs),
    }[kind]()


KINDS = ["single_site", "rwm", "da", "msda", "amsda", "coupled"]


def test_zero_budget_records_initial_state(toy):
    tr = run(_driver("single_site", toy), RunSettings(budget=0, record="parameter"))
    assert len(tr) == 1
    np.testing.assert_array_equal(tr.values[0], 3.0)


def test_thinning_every_ten_sweeps(toy):
    d = SingleSiteDriver(toy.posterior("fine"), np.full(4, 3.0), np.random.default_rng(0), tune=False)
    tr = run(d, RunSettings(budget=40000, record="parameter"))
    assert len(tr) == 4001  # record 0 plus 4000 thinned records
    fine = np.array([c[0] for c in tr.counts])
    # record k is the first sweep end at or past 10 m fine solves after record 0
    k = np.arange(len(fine))
    assert np.all((fine >= 1 + 40 * k) & (fine < 1 + 40 * k + 4))


@pytest.mark.parametrize("kind", KINDS)
def test_counters_equal_solver_calls(kind):
    toy = ToyPosterior()
    d = _driver(kind, toy)
    tr = run(d, RunSettings(budget=50, burn_in=10, record="parameter"))
    f, a, c = d.counters()
    assert (f, a, c) == (toy.models["fine"].calls, toy.models["approx"].calls, toy.models["coarse"].calls)
    assert tr.counts[-1] == (f, a, c) or d.effort(RunSettings(0).weights) >= 50 * 4
    assert np.all(np.diff(tr.cost()) > 0)


@pytest.mark.parametrize("kind", KINDS)
def test_identical_seeds_identical_traces(kind, tmp_path):
    texts = []
    for k in range(2):
        toy = ToyPosterior()
        run(_driver(kind, toy), RunSettings(budget=60, burn_in=10, record="parameter", trace_path=tmp_path / f"{k}.csv"))
        texts.append((tmp_path / f"{k}.csv").read_bytes())
    assert texts[0] == texts[1]


@pytest.mark.parametrize("kind", KINDS)
def test_resume_continues_exactly(kind, tmp_path):
    straight = run(_driver(kind, ToyPosterior()), RunSettings(budget=80, burn_in=10, record="parameter"))
    s1 = RunSettings(budget=40, burn_in=10, record="parameter", trace_path=tmp_path / "t.csv",
                     checkpoint_path=tmp_path / "c.json", checkpoint_records=2)
    run(_driver(kind, ToyPosterior()), s1)
    s2 = RunSettings(budget=80, burn_in=10, record="parameter", trace_path=tmp_path / "t.csv",
                     checkpoint_path=tmp_path / "c.json", resume=True)
    resumed = run(_driver(kind, ToyPosterior(), seed=99), s2)
    assert resumed.to_csv() == straight.to_csv()
    assert Trace.load(tmp_path / "t.csv").to_csv() == straight.to_csv()


def test_resume_rejects_other_kernel(tmp_path):
    s = RunSettings(budget=10, record="parameter", trace_path=tmp_path / "t.csv", checkpoint_path=tmp_path / "c.json")
    run(_driver("single_site", ToyPosterior()), s)
    s.resume = True
    with pytest.raises(ConfigurationError, match="single_site"):
        run(_driver("da", ToyPosterior()), s)


def test_run_validates_settings(toy):
    with pytest.raises(ConfigurationError):
        run(_driver("single_site", toy), RunSettings(budget=-1))
    with pytest.raises(ConfigurationError):
        run(_driver("single_site", toy), RunSettings(budget=1, thin=0))


def test_tuning_freezes_after_burn_in(toy):
    d = _driver("single_site", toy)
    run(d, RunSettings(budget=300, burn_in=100, record="parameter"))
    t = d.tuners["sigma_z"]
    assert t.frozen and d.params["sigma_z"] == t.scale
    assert t.windows_done >= 20


def test_amsda_first_step_uses_initial_residual(toy):
    d = _driver("amsda", toy)
    d.initialize()
    x0 = d.chain.x
    r0 = toy.models["fine"](toy.qprior.to_field(x0)) - toy.models["coarse"](toy.qprior.to_field(x0))
    assert d.bias.k == 1
    np.testing.assert_array_equal(d.bias.b, r0)
    np.testing.assert_array_equal(d.surrogate.bias.Sigma_b, 0.0)
    d.step()
    assert d.bias.k == 2
