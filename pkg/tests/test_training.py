import numpy as np
import pytest

from pnal_lab.clustering import DbscanClusterer, DbscanParams
from pnal_lab.data import LabelStore
from pnal_lab.noise import NoiseConfig, corrupt
from pnal_lab.pnal.selection import HistoryBuffer, record_predictions
from pnal_lab.pnal.training import Pool, PnalConfig, clean_block, evaluate, run_training
from pnal_lab.synth import BenchmarkSpec, default_benchmark

CLUSTERER = DbscanClusterer(DbscanParams(0.072, 10))


@pytest.fixture(scope="module")
def tiny():
    bench = default_benchmark(5, BenchmarkSpec(num_train=3, num_test=1))
    stores, _ = corrupt(bench.train, NoiseConfig("symmetric", 0.4, seed=1))
    return bench, LabelStore.concat(stores)


def cfg(**kw):
    base = dict(epochs_total=6, e_warmup=4, q=4, sample_n=128, batch_blocks=4, seed=0)
    base.update(kw)
    return PnalConfig(**base)


def test_config_rules():
    assert PnalConfig.recommended(30).e_warmup == 5
    assert PnalConfig().e_clean == 25
    assert not PnalConfig().baseline().pnal_enabled
    with pytest.raises(ValueError):
        PnalConfig(q=5, e_warmup=4)
    with pytest.raises(ValueError):
        PnalConfig(gamma=0.5)
    with pytest.raises(ValueError):
        PnalConfig(sigma=1.5)
    PnalConfig(q=8, e_warmup=30, epochs_total=30)  # no cleaning stage, no constraint


def test_baseline_never_corrects(tiny):
    bench, store = tiny
    res = run_training(bench.train, store.copy(), cfg(e_warmup=6), test_scenes=bench.test)
    assert not res.store.ever_replaced.any()
    assert all(r.correction_frac == 0 for r in res.log)
    assert [(r.epoch, r.split) for r in res.log[:2]] == [(1, "train"), (1, "test")]


def test_history_recorded_from_first_epoch(tiny):
    bench, store = tiny
    res = run_training(bench.train, store.copy(), cfg(epochs_total=1, e_warmup=1, q=1))
    assert res.history.fill.max() == 1 and res.history.fill.mean() > 0.3


def test_coverage_monotone_and_store_mutated(tiny):
    bench, store = tiny
    snaps = []
    res = run_training(bench.train, store.copy(), cfg(), CLUSTERER,
                       on_epoch_end=lambda e, s: snaps.append(s.ever_replaced.copy()))
    for a, b in zip(snaps, snaps[1:]):
        assert np.all(b >= a)
    assert not snaps[3].any() and snaps[-1].any()
    fracs = [r.correction_frac for r in res.log if r.split == "train"]
    assert fracs == sorted(fracs)


def test_deterministic(tiny):
    bench, store = tiny
    a = run_training(bench.train, store.copy(), cfg(), CLUSTERER, test_scenes=bench.test)
    b = run_training(bench.train, store.copy(), cfg(), CLUSTERER, test_scenes=bench.test)
    assert a.log == b.log
    assert all(np.array_equal(x, y) for x, y in zip(a.params.arrays(), b.params.arrays()))


def test_wall_time_opt_in(tiny):
    bench, store = tiny
    res = run_training(bench.train, store.copy(), cfg(epochs_total=1, e_warmup=1, q=1), record_wall_time=True)
    assert res.log[0].wall_time > 0


def test_clean_block_homogeneous_clusters(tiny):
    bench, store = tiny
    pool = Pool(bench.train, 1.0)
    blocks = pool.blocks(0.5, CLUSTERER)
    h = HistoryBuffer(pool.size, 4)
    rng = np.random.default_rng(0)
    # histories agree with gt on even rows, are mixed on odd ones
    for t in range(4):
        pred = pool.gt.copy()
        odd = np.arange(pool.size) % 2 == 1
        pred[odd] = (pool.gt[odd] + t) % 6
        record_predictions(h, np.arange(pool.size), pred)
    config = cfg()
    for pb in blocks:
        s = store.copy()
        n = clean_block(pb, h, s, config, 6, rng)
        lab = s.current_label[pb.rows]
        touched = s.ever_replaced[pb.rows]
        for c in np.unique(pb.cluster_of[touched]):
            members = pb.cluster_of == c
            assert len(np.unique(lab[members])) == 1 and touched[members].all()
        assert n == len(np.unique(pb.cluster_of[touched]))


def test_errors(tiny):
    bench, store = tiny
    with pytest.raises(ValueError, match="clusterer"):
        run_training(bench.train, store.copy(), cfg())
    with pytest.raises(ValueError, match="label store"):
        run_training(bench.train[:1], store.copy(), cfg(e_warmup=6))


def test_evaluate_range(tiny):
    bench, store = tiny
    res = run_training(bench.train, store.copy(), cfg(e_warmup=6))
    oa, miou = evaluate(res.params, Pool(bench.train, 1.0))
    last = [r for r in res.log if r.split == "train"][-1]
    assert oa == last.oa and miou == last.miou
