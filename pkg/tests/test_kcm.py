import math
import warnings

import numpy as np
import pytest
from scipy.stats import chisquare, ks_2samp

from kcmlab.family import UpdateFamily
from kcmlab.kcm import (
    ExactSystem,
    SimConfig,
    constraint,
    east_min_infections,
    east_reach_bfs,
    estimate_tau0,
    exact_tau0,
    final_state,
    simulate,
    stationarity_probe,
    threshold_structure,
)
from kcmlab.lattice import Boundary, Configuration, SeededStream, Window

warnings.filterwarnings("ignore", message="torus side below")

WEST = UpdateFamily("west_chain", [[(-1, 0)]])


def chain_system(n, q):
    return ExactSystem(WEST, sites=tuple((i, 0) for i in range(1, n + 1)),
                       boundary=Boundary.explicit({(0, 0): True}, collar=1), q=q)


def single_site(q):
    return ExactSystem(WEST, sites=((1, 0),), boundary=Boundary.all_infected(), q=q)


def test_constraint_examples(fa2f, east):
    win = Window(-2, 2, -2, 2)
    cfg = Configuration(win, Boundary.all_healthy(), [(1, 0), (0, 1)])
    assert constraint(fa2f, cfg, (0, 0))
    cfg2 = Configuration(win, Boundary.all_healthy(), [(1, 0)])
    assert not constraint(fa2f, cfg2, (0, 0))
    assert constraint(east, cfg2, (0, 0))


def test_threshold_structure(fa2f, east, duarte, fig_family, one_neighbour):
    assert threshold_structure(fa2f) == ([(-1, 0), (0, -1), (0, 1), (1, 0)], 2)
    assert threshold_structure(east) == ([(1, 0)], 1)
    assert threshold_structure(one_neighbour)[1] == 1
    assert threshold_structure(duarte) == ([(-1, 0), (0, -1), (0, 1)], 2)
    assert threshold_structure(fig_family) is None


def test_exact_tau0_closed_forms():
    for q in (0.3, 0.5, 0.7):
        assert exact_tau0(single_site(q), (1, 0)) == pytest.approx((1 - q) / q, abs=1e-9)
        assert exact_tau0(chain_system(1, q), (1, 0)) == pytest.approx((1 - q) / q, abs=1e-9)


def test_exact_system_detailed_balance():
    sys = chain_system(3, 0.5)
    Q = sys.generator_matrix().toarray()
    mu = sys.stationary_weights()
    assert np.abs(mu @ Q).max() < 1e-10


def test_exact_tau0_unreachable_reported():
    sys = ExactSystem(WEST, sites=((1, 0), (2, 0)),
                      boundary=Boundary.all_healthy(), q=0.4)
    with pytest.raises(ValueError):
        exact_tau0(sys, (2, 0))


def test_mc_single_site_matches_oracle():
    q = 0.3
    n = 20000
    cfg = SimConfig(WEST, q=q, t_max=500.0, seed=7, replicates=n,
                    window=Window(1, 1, 0, 0),
                    boundary=Boundary.all_infected(), origin=(1, 0))
    est = estimate_tau0(cfg, parallel=False)
    sd = np.std(est.samples, ddof=1) / math.sqrt(n)
    assert est.censored == 0
    assert abs(est.mean - (1 - q) / q) <= 3 * sd


def test_mc_east_chain_matches_exact():
    q = 0.5
    exact = exact_tau0(chain_system(5, q), (5, 0))
    n = 6000
    cfg = SimConfig(WEST, q=q, t_max=2000.0, seed=11, replicates=n,
                    window=Window(1, 5, 0, 0),
                    boundary=Boundary.explicit({(0, 0): True}, collar=1),
                    origin=(5, 0))
    est = estimate_tau0(cfg, parallel=False)
    sd = np.std(est.samples, ddof=1) / math.sqrt(n)
    assert est.censored == 0
    assert abs(est.mean - exact) <= 3 * sd


def test_law_exactness_three_site_chain():
    q, t = 0.5, 2.0
    sys = chain_system(3, q)
    target = sys.state_distribution(t)
    n = 20000
    counts = np.zeros(8, dtype=int)
    for r in range(n):
        cfg = SimConfig(WEST, q=q, t_max=t, seed=123, replicates=1,
                        window=Window(1, 3, 0, 0),
                        boundary=Boundary.explicit({(0, 0): True}, collar=1))
        state_cfg = final_state(cfg, SeededStream(123, r))
        st = sum(
            (1 << i) for i, s in enumerate(sys.sites) if state_cfg.infected(s)
        )
        counts[st] += 1
    res = chisquare(counts, target * n)
    assert res.pvalue > 0.001, (counts, target * n)


def test_thinned_vs_naive_distribution():
    vals_a, vals_b = [], []
    for r in range(3000):
        cfg = SimConfig(WEST, q=0.4, t_max=200.0, seed=1000 + r, replicates=1,
                        window=Window(1, 3, 0, 0),
                        boundary=Boundary.explicit({(0, 0): True}, collar=1),
                        origin=(3, 0))
        vals_a.append(simulate(cfg, engine="python").value)
        cfg2 = SimConfig(WEST, q=0.4, t_max=200.0, seed=50000 + r, replicates=1,
                         window=Window(1, 3, 0, 0),
                         boundary=Boundary.explicit({(0, 0): True}, collar=1),
                         origin=(3, 0))
        vals_b.append(simulate(cfg2, engine="naive").value)
    assert ks_2samp(vals_a, vals_b).pvalue > 0.001


def test_compiled_vs_python_engine_distribution(fa2f):
    a = [simulate(SimConfig(fa2f, q=0.4, torus_side=8, t_max=300.0,
                            seed=r, replicates=1), engine="auto").value
         for r in range(1500)]
    b = [simulate(SimConfig(fa2f, q=0.4, torus_side=8, t_max=300.0,
                            seed=77000 + r, replicates=1), engine="python").value
         for r in range(1500)]
    assert ks_2samp(a, b).pvalue > 0.001


def test_reproducibility(fa2f):
    a = simulate(SimConfig(fa2f, q=0.5, torus_side=16, t_max=60.0, seed=9,
                           replicates=1))
    b = simulate(SimConfig(fa2f, q=0.5, torus_side=16, t_max=60.0, seed=9,
                           replicates=1))
    assert a == b
    c = simulate(SimConfig(fa2f, q=0.5, torus_side=16, t_max=60.0, seed=10,
                           replicates=1))
    assert a != c


def test_stopping_value_independent_of_horizon(fa2f):
    a = simulate(SimConfig(fa2f, q=0.6, torus_side=12, t_max=50.0, seed=3,
                           replicates=1))
    b = simulate(SimConfig(fa2f, q=0.6, torus_side=12, t_max=5000.0, seed=3,
                           replicates=1))
    if not a.censored:
        assert a.value == b.value


def test_frozen_configuration_censors(east):
    cfg = SimConfig(east, q=0.5, t_max=10.0, seed=1, replicates=1,
                    window=Window(0, 4, 0, 0), boundary=Boundary.all_healthy(),
                    initial="explicit", explicit_sites=())
    s = simulate(cfg)
    assert s.censored and s.rings_processed == 0


def test_origin_initially_infected(fa2f):
    cfg = SimConfig(fa2f, q=0.5, t_max=10.0, seed=1, replicates=1,
                    torus_side=8, initial="explicit",
                    explicit_sites=((0, 0), (1, 0), (0, 1)))
    assert simulate(cfg, engine="python").value == 0.0


def test_stationarity_probe_small(fa2f):
    cfg = SimConfig(fa2f, q=0.3, torus_side=16, t_max=200.0, seed=5,
                    replicates=20)
    res = stationarity_probe(cfg, probe_site=(3, 3))
    assert abs(res["mean"] - 0.3) <= 4 * res["stderr"] + 0.02


def test_estimate_parallel_matches_sequential(fa2f):
    cfg = SimConfig(fa2f, q=0.6, torus_side=16, t_max=50.0, seed=8,
                    replicates=30)
    seq = estimate_tau0(cfg, parallel=False)
    par = estimate_tau0(cfg, parallel=True)
    assert seq.samples == par.samples


def test_east_ladder():
    assert [east_reach_bfs(n) for n in range(1, 5)] == [1, 3, 7, 15]
    for L in range(1, 16):
        assert east_min_infections(L) == math.ceil(math.log2(L + 1))


def test_simconfig_validation(fa2f):
    with pytest.raises(ValueError):
        SimConfig(fa2f, q=1.5, torus_side=16)
    with pytest.raises(ValueError):
        SimConfig(fa2f, q=0.5, torus_side=2)
    with pytest.raises(ValueError):
        SimConfig(fa2f, q=0.5, torus_side=16, t_max=-1.0)
    with pytest.warns(UserWarning):
        SimConfig(fa2f, q=0.5, torus_side=16, t_max=1e6)
    cfg = SimConfig(fa2f, q=0.5, torus_side=16, t_max=1.0, replicates=5)
    with pytest.raises(ValueError):
        estimate_tau0(cfg)
