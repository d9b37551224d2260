"""Acceptance suite: one printed pass/fail line per exit criterion.

The directional suite (criterion 6) trains the full ten-run grid on
MovieLens-100K and takes on the order of fifteen minutes; it is marked slow
and can be deselected with ``-m "not slow"`` during development.

Known red: criterion 6a demands that the conditioned model's MEP and MER
strictly exceed every baseline at every swept neighborhood size, but at
k=100 the user-kNN baseline recommends exclusively neighborhood-supported
items for every user and therefore attains both metrics' structural maxima
exactly (MEP = 1.0 and per-user maximal MER); strict dominance over it is
impossible there, and the assertion fails by design rather than being
weakened.  Every other comparison in 6a holds strictly.
"""

import math
import time

import numpy as np
import pytest

from erbm import rbm
from erbm.cli import main
from erbm.dataset import RatingMatrix, serialize_table, temporal_split
from erbm.exact import exact_distribution
from erbm.experiment import Cell, run_experiment, write_report
from erbm.explain import render_explanation
from erbm.metrics import mep, mer, ndcg_at_k, rmse
from erbm.neighborhood import explainability_matrix, k_nearest_neighbors

from .conftest import ML100K_PATH, blocky_table, random_table
from .test_explain import neighborhood_with_item_ratings
from .test_metrics import brute_force_ndcg
from .test_rbm import seeded_params

K_SWEEP = (10, 25, 50, 100)
F_SWEEP = (10, 20, 50, 100)
BASELINE_TAGS = ("plain_rbm", "user_knn", "most_popular")


def check(name: str, ok: bool, detail: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    suffix = f" ({detail})" if detail else ""
    print(f"ACCEPTANCE {status}: {name}{suffix}")
    assert ok, f"{name}{suffix}"


# --- 1. dataset protocol -------------------------------------------------


def test_c1_dataset_protocol(ml100k_table):
    start = time.time()
    with open(ML100K_PATH, "r", encoding="utf-8") as fh:
        from erbm.dataset import parse_ratings

        table = parse_ratings(fh)
    split = temporal_split(table, 0.1)
    elapsed = time.time() - start

    ok = table.n_ratings == 100_000
    # Actual counts are reported, not asserted against rounded figures.
    print(f"ingested users={table.n_users} items={table.n_items}")

    by_user_total = {u: len(r) for u, r in table.by_user().items()}
    by_user_test = {u: len(r) for u, r in split.test.by_user().items()}
    holdout_ok = all(
        by_user_test.get(u, 0) == min(math.ceil(0.1 * n), n - 1)
        for u, n in by_user_total.items()
    )

    train_keys = {(r.user, r.item) for r in split.train_table.records}
    test_keys = {(r.user, r.item) for r in split.test.records}
    partition_ok = (
        not (train_keys & test_keys)
        and split.train_table.n_ratings + split.test.n_ratings == table.n_ratings
    )

    temporal_ok = True
    test_by_user = split.test.by_user()
    for user, train_recs in split.train_table.by_user().items():
        tests = test_by_user.get(user)
        if not tests:
            continue
        newest_train = max((r.timestamp, r.item) for r in train_recs)
        oldest_test = min((r.timestamp, r.item) for r in tests)
        if newest_train >= oldest_test:
            temporal_ok = False
            break

    check(
        "1 dataset protocol",
        ok and holdout_ok and partition_ok and temporal_ok and elapsed < 5.0,
        f"100000 ratings, parse+split {elapsed:.2f}s",
    )


# --- 2. enumeration oracle vs conditional activations ---------------------


def test_c2_oracle_equivalence():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for trial in range(20):
        n_items = int(rng.integers(2, 7))
        f = int(rng.integers(1, 5))
        params = rbm.RbmParams(
            W=rng.normal(0, 0.8, (n_items, f)),
            D=rng.normal(0, 0.8, (n_items, f)),
            a=rng.normal(0, 0.8, f),
            b=rng.normal(0, 0.8, n_items),
            c=rng.normal(0, 0.8, n_items),
        )
        m = rng.random(n_items)
        dist = exact_distribution(params, m=m)
        for v in dist.v_states:
            gap = np.max(np.abs(
                dist.p_hidden_given(v) - rbm.hidden_activation(params, v, m)
            ))
            worst = max(worst, gap)
        for h in dist.h_states:
            gap = np.max(np.abs(
                dist.p_visible_given(h) - rbm.visible_activation(params, h)
            ))
            worst = max(worst, gap)
        free = exact_distribution(params)
        for h in free.h_states:
            gap = np.max(np.abs(
                free.p_expl_given(h) - rbm.explainability_activation(params, h)
            ))
            worst = max(worst, gap)
        assert abs(dist.probs.sum() - 1.0) < 1e-12
    check("2 oracle equivalence", worst < 1e-9, f"max conditional gap {worst:.2e}")


# --- 3. Gibbs chain statistics and the CD fixed point ---------------------


def test_c3_gibbs_and_cd_statistics():
    params = seeded_params(3, 2, seed=77, scale=0.6)
    rng = np.random.default_rng(4242)
    m = rng.random(3)
    dist = exact_distribution(params, m=m)
    vh_exact, mh_exact = dist.expected_products()
    stats = rbm.sample_model_statistics(
        params, m, n_chains=100_000, burn_in=500, rng=rng
    )
    vh_ok = np.all(
        np.abs(stats.vh_mean - vh_exact) <= 3 * np.maximum(stats.vh_se, 1e-12)
    )
    mh_ok = np.all(
        np.abs(stats.mh_mean - mh_exact) <= 3 * np.maximum(stats.mh_se, 1e-12)
    )

    config = rbm.TrainConfig(f=2, cd_steps=0)
    deltas = rbm.cd_step(
        params,
        np.array([[0.4, 0.0, 1.0], [0.2, 0.6, 0.0]]),
        np.array([[0.3, 0.9, 0.0], [0.5, 0.5, 0.5]]),
        np.array([[True, False, True], [True, True, False]]),
        config,
        np.random.default_rng(7),
    )
    fixed_point_ok = all(
        np.all(arr == 0.0)
        for arr in (deltas.w, deltas.d, deltas.a, deltas.b, deltas.c)
    )
    gap = np.max(np.abs(stats.vh_mean - vh_exact) / np.maximum(stats.vh_se, 1e-12))
    check(
        "3 gibbs/cd statistics",
        vh_ok and mh_ok and fixed_point_ok,
        f"100000 chains, worst deviation {gap:.2f} se; fixed-point deltas exact zeros",
    )


# --- 4. explainability scores vs exhaustive oracle ------------------------


def test_c4_explainability_score_oracle():
    matrix = RatingMatrix.from_table(random_table(50, 30, density=0.25, seed=404))
    k = 7
    neighbors = k_nearest_neighbors(matrix, k)
    expl = explainability_matrix(matrix, k, neighbors=neighbors)
    exact = True
    for u in range(matrix.n_users):
        nb = neighbors.indices[u]
        for i in range(matrix.n_items):
            total = 0
            for x in nb:
                r = matrix.get(int(x), i)
                total += r if r is not None else 0
            oracle = total / (len(nb) * matrix.r_scale)
            if expl.scores[u, i] != oracle:
                exact = False
            if (expl.scores[u, i] > 0) != any(
                matrix.get(int(x), i) is not None for x in nb
            ):
                exact = False
    bounds_ok = np.all((expl.scores >= 0.0) & (expl.scores <= 1.0))
    check(
        "4 explainability score oracle",
        exact and bounds_ok,
        "entrywise exact equality on 50-user synthetic data",
    )


# --- 5. metric correctness against hand/brute-force oracles ---------------


def test_c5_metric_oracles():
    from .conftest import make_table

    truth = make_table([(1, 1, 3, 1), (1, 2, 5, 1)])
    item_of = {ext: idx for idx, ext in enumerate(truth.item_ids)}
    preds = {(0, item_of[1]): 4.0, (0, item_of[2]): 3.0}
    rmse_ok = abs(rmse(preds, truth) - math.sqrt(2.5)) < 1e-9

    relevance = {0: 0.0, 1: 3.0, 2: 2.0}
    presented = [0, 1, 2]
    got = ndcg_at_k(presented, relevance, k=3)
    ndcg_ok = abs(got - brute_force_ndcg(presented, relevance, 3)) < 1e-9
    rng = np.random.default_rng(55)
    for _ in range(25):
        n = int(rng.integers(2, 7))
        rel = {i: float(rng.integers(0, 5)) for i in range(n)}
        ranked = list(rng.permutation(n))
        kk = int(rng.integers(1, n + 1))
        if abs(ndcg_at_k(ranked, rel, kk) - brute_force_ndcg(ranked, rel, kk)) >= 1e-9:
            ndcg_ok = False

    from erbm.neighborhood import ExplainabilityMatrix

    scores = np.zeros((2, 12))
    scores[0, :8] = 0.5
    scores[1, :6] = 0.5
    expl = ExplainabilityMatrix(scores, k=3)
    lists = {0: list(range(10)), 1: list(range(10))}
    mep_ok = abs(mep(lists, expl) - 0.7) < 1e-9

    cand_scores = np.zeros((1, 6))
    cand_scores[0, :4] = 0.3
    raw = np.zeros((1, 6))
    mask = np.zeros((1, 6), dtype=bool)
    raw[0, 5], mask[0, 5] = 4, True
    train = RatingMatrix(raw, mask, 5, (1,), (1, 2, 3, 4, 5, 6))
    mer_ok = abs(
        mer({0: [0]}, ExplainabilityMatrix(cand_scores, k=2), train) - 0.25
    ) < 1e-9

    check(
        "5 metric correctness",
        rmse_ok and ndcg_ok and mep_ok and mer_ok,
        "rmse/ndcg/mep/mer all within 1e-9 of oracles",
    )


# --- 6. directional sweep on MovieLens-100K -------------------------------


@pytest.fixture(scope="session")
def figure3_report(ml100k_split, tmp_path_factory):
    cells = [Cell("erbm", 50, k) for k in K_SWEEP]
    cells += [Cell(tag, 50, k) for tag in BASELINE_TAGS for k in K_SWEEP]
    cells += [
        Cell(model, f, 50)
        for model in ("erbm", "plain_rbm")
        for f in F_SWEEP
        if f != 50  # the f=50, k=50 cells are already in the k sweep
    ]
    start = time.time()
    report = run_experiment(ml100k_split, cells, runs=10)
    elapsed = time.time() - start
    out = tmp_path_factory.mktemp("reports") / "figure3.csv"
    write_report(report, out)
    print(f"figure-3 sweep: {len(cells)} cells x 10 runs in {elapsed:.0f}s -> {out}")
    return report, elapsed


@pytest.mark.slow
def test_c6a_explainability_dominance(figure3_report):
    report, _ = figure3_report
    assert not report.failures, report.failures
    failures = []
    for k in K_SWEEP:
        for metric in ("mep", "mer"):
            ours = report.mean_of(Cell("erbm", 50, k), metric)
            for tag in BASELINE_TAGS:
                theirs = report.mean_of(Cell(tag, 50, k), metric)
                margin = ours - theirs
                line = f"k={k} {metric}: erbm {ours:.6f} vs {tag} {theirs:.6f}"
                print(("  ok   " if margin > 0 else "  TIE/LOSS ") + line)
                if margin <= 0:
                    failures.append(line)
    check(
        "6a explainability dominance",
        not failures,
        "; ".join(failures) if failures else "strict at every k and baseline",
    )


@pytest.mark.slow
def test_c6a_attainable_comparisons_hold(figure3_report):
    # Companion to the verbatim criterion above: every comparison that is
    # not structurally saturated must stay a strict win.  user-kNN at k=100
    # sits exactly at both metric ceilings, so it is the one exclusion.
    report, _ = figure3_report
    for k in K_SWEEP:
        for metric in ("mep", "mer"):
            ours = report.mean_of(Cell("erbm", 50, k), metric)
            for tag in BASELINE_TAGS:
                if tag == "user_knn" and k == 100:
                    theirs = report.mean_of(Cell(tag, 50, k), metric)
                    assert ours == theirs  # exact tie at the ceiling
                    continue
                assert ours > report.mean_of(Cell(tag, 50, k), metric), (
                    f"k={k} {metric} vs {tag}"
                )


@pytest.mark.slow
def test_c6b_rmse_tracks_plain_rbm(figure3_report):
    report, _ = figure3_report
    within = True
    wins_above_20 = []
    for f in F_SWEEP:
        ours = report.mean_of(Cell("erbm", f, 50), "rmse")
        plain = report.mean_of(Cell("plain_rbm", f, 50), "rmse")
        print(f"  f={f}: erbm {ours:.5f} plain {plain:.5f} diff {ours - plain:+.5f}")
        if abs(ours - plain) > 0.05:
            within = False
        if f > 20 and ours < plain:
            wins_above_20.append(f)
    check(
        "6b rmse tracks plain rbm",
        within and bool(wins_above_20),
        f"all diffs within 0.05; erbm strictly better at f={wins_above_20}",
    )


@pytest.mark.slow
def test_c6c_absolute_rmse_at_f50(figure3_report):
    report, _ = figure3_report
    value = report.mean_of(Cell("erbm", 50, 50), "rmse")
    check("6c erbm rmse at f=50", value <= 1.10, f"rmse {value:.4f} <= 1.10")


@pytest.mark.slow
def test_c6_runtime_budget(figure3_report):
    _, elapsed = figure3_report
    check("6 sweep runtime budget", elapsed <= 1800, f"{elapsed:.0f}s <= 1800s")


# --- 7. explanation rendering ---------------------------------------------


def test_c7_explanation_rendering():
    matrix, neighbors = neighborhood_with_item_ratings([3, 3, 4, 4, 4, 4, 4, 4, 5, 5])
    eight_of_ten = render_explanation(0, 0, matrix, neighbors)
    first_ok = eight_of_ten.text == (
        "8 out of 10 people with similar interests to you have rated this movie "
        "4 and higher."
    )

    matrix, neighbors = neighborhood_with_item_ratings([5, 5, 5, 5, 0, 0, 0, 0, 0, 0])
    four_at_five = render_explanation(0, 0, matrix, neighbors)
    second_ok = four_at_five.text == (
        "4 out of 10 people with similar interests to you have rated this movie 5."
    )

    recount_ok = True
    rng = np.random.default_rng(31337)
    for _ in range(50):
        ratings = [int(r) for r in rng.integers(0, 6, size=int(rng.integers(1, 12)))]
        if not any(ratings):
            continue
        matrix, neighbors = neighborhood_with_item_ratings(ratings)
        statement = render_explanation(0, 0, matrix, neighbors)
        recount = sum(1 for r in ratings if r >= statement.rating_level)
        if recount != statement.qualifying_count:
            recount_ok = False
    check(
        "7 explanation rendering",
        first_ok and second_ok and recount_ok,
        "table shapes reproduced; statements recount against stored ratings",
    )


# --- 8. determinism --------------------------------------------------------


def test_c8_determinism(tmp_path):
    ratings = tmp_path / "ratings.tsv"
    ratings.write_text(serialize_table(blocky_table(n_users=30, n_items=20, seed=77)))
    work = tmp_path / "work"

    assert main(["ingest", "--ratings", str(ratings), "--out-dir", str(work),
                 "--test-fraction", "0.2"]) == 0
    model_a = work / "a.tsv"
    model_b = work / "b.tsv"
    for out in (model_a, model_b):
        code = main([
            "train", "--data-dir", str(work), "--out", str(out),
            "--f", "5", "--k", "3", "--epochs", "3", "--seed", "9",
        ])
        assert code == 0
    models_identical = model_a.read_bytes() == model_b.read_bytes()

    report_path = tmp_path / "report.csv"
    cfg = tmp_path / "sweep.cfg"
    cfg.write_text(
        f"ratings = {ratings}\n"
        "test_fraction = 0.2\n"
        "models = erbm, plain_rbm, user_knn, most_popular\n"
        "f_values = 5\nk_values = 3\nruns = 2\nepochs = 3\n"
        f"out = {report_path}\n"
    )
    assert main(["sweep", "--config", str(cfg)]) == 0
    first = report_path.read_bytes()
    assert main(["sweep", "--config", str(cfg)]) == 0
    reports_identical = report_path.read_bytes() == first

    params, _ = rbm.load_model(model_a)
    reloaded_path = tmp_path / "reload.tsv"
    rbm.save_model(params, reloaded_path)
    reloaded, _ = rbm.load_model(reloaded_path)
    v = np.linspace(0, 1, params.n_items)
    m = np.linspace(1, 0, params.n_items)
    drift = np.max(np.abs(
        rbm.predict_ratings(params, v, m) - rbm.predict_ratings(reloaded, v, m)
    ))
    check(
        "8 determinism",
        models_identical and reports_identical and drift < 1e-6,
        f"byte-identical models and reports; round-trip drift {drift:.1e}",
    )
