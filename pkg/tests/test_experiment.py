"""Experiment orchestration: config schema, grid search, aggregation, SFS."""

import math

import numpy as np
import pytest

from turntaking.errors import ConfigError, TrainingDiverged
from turntaking.experiment import (
    CorpusRunner,
    ExperimentConfig,
    FinalResult,
    GridSpec,
    HyperPoint,
    RESULT_COLUMNS,
    RunResult,
    SfsResult,
    SfsSpec,
    SfsStep,
    config_from_dict,
    final_evaluation,
    grid_search,
    read_results_csv,
    read_sfs_report,
    sequential_forward_selection,
    split_sessions,
    write_results_csv,
    write_sfs_report,
)
from turntaking.features import CANONICAL_ACOUSTIC_COLUMNS, FeaturePlan
from turntaking.seeds import derive_seed
from turntaking.session import SplitSpec
from turntaking.synth import SynthConfig, generate
from turntaking.training import TrainingSchedule

from conftest import make_session


def _config(**overrides) -> ExperimentConfig:
    base = dict(
        split=SplitSpec(("a",), ("b",), ("c",)),
        plan=FeaturePlan(use_acoustic=("loudness",), use_va=True),
        seed=123,
        grid=GridSpec(
            hidden_sizes=(4, 8), learning_rates=(0.001, 0.01), l2_values=(0.0001,)
        ),
        runs_per_hidden_size=2,
        final_runs=3,
        schedule=TrainingSchedule(chunk_frames=600, max_epochs=2, patience=3),
        sfs=SfsSpec(steps=3, hidden_size=4),
    )
    base.update(overrides)
    return ExperimentConfig(**base)


def _result(seed, heldout=0.5, fingerprint="fp", **overrides) -> RunResult:
    base = dict(
        fingerprint=fingerprint,
        seed=seed,
        heldout_loss=heldout,
        test_bce=0.4,
        test_mae=0.2,
        f_pause50=0.8,
        f_pause500=0.7,
        f_onset=0.6,
        f_overlap=0.5,
        onset_threshold=0.45,
    )
    base.update(overrides)
    return RunResult(**base)


MINIMAL_DICT = {
    "split": {"train": ["a"], "heldout": ["b"], "test": ["c"]},
    "plan": {"acoustic": ["loudness"], "va": True},
    "seed": 7,
}


class TestConfigSchema:
    def test_minimal_dict_gets_defaults(self):
        cfg = config_from_dict(MINIMAL_DICT)
        assert cfg.seed == 7
        assert cfg.grid == GridSpec()
        assert cfg.schedule == TrainingSchedule()
        assert cfg.sfs == SfsSpec()
        assert cfg.objective_kind == "bce"
        assert cfg.runs_per_hidden_size == 3
        assert cfg.final_runs == 10

    def test_round_trip_through_json_dict(self):
        cfg = _config()
        again = config_from_dict(cfg.to_json_dict())
        assert again == cfg
        assert again.fingerprint() == cfg.fingerprint()

    def test_acoustic_all_expands_to_canonical(self):
        raw = dict(MINIMAL_DICT, plan={"acoustic": "all", "va": True})
        cfg = config_from_dict(raw)
        assert cfg.plan.use_acoustic == CANONICAL_ACOUSTIC_COLUMNS

    @pytest.mark.parametrize(
        "mutate",
        [
            lambda d: d.update(bogus=1),
            lambda d: d["split"].update(validation=["x"]),
            lambda d: d["plan"].update(prosody=True),
        ],
    )
    def test_unknown_keys_rejected(self, mutate):
        raw = {
            "split": dict(MINIMAL_DICT["split"]),
            "plan": dict(MINIMAL_DICT["plan"]),
            "seed": 7,
        }
        mutate(raw)
        with pytest.raises(ConfigError, match="unknown keys"):
            config_from_dict(raw)

    def test_unknown_nested_grid_key_rejected(self):
        raw = dict(MINIMAL_DICT, grid={"hidden": [4]})
        with pytest.raises(ConfigError, match="unknown keys"):
            config_from_dict(raw)

    @pytest.mark.parametrize("missing", ["split", "plan", "seed"])
    def test_missing_required_key_rejected(self, missing):
        raw = dict(MINIMAL_DICT)
        del raw[missing]
        with pytest.raises(ConfigError, match="missing required"):
            config_from_dict(raw)

    def test_objective_validated(self):
        with pytest.raises(ConfigError, match="objective"):
            config_from_dict(dict(MINIMAL_DICT, objective="mse"))

    def test_counts_validated(self):
        with pytest.raises(ConfigError):
            config_from_dict(dict(MINIMAL_DICT, final_runs=0))
        with pytest.raises(ConfigError):
            config_from_dict(dict(MINIMAL_DICT, runs_per_hidden_size=0))


class TestFingerprint:
    def test_sixteen_hex_chars(self):
        fp = _config().fingerprint()
        assert len(fp) == 16
        int(fp, 16)

    def test_stable_for_equal_configs(self):
        assert _config().fingerprint() == _config().fingerprint()

    @pytest.mark.parametrize(
        "override",
        [
            {"seed": 124},
            {"final_runs": 4},
            {"schedule": TrainingSchedule(chunk_frames=500, max_epochs=2, patience=3)},
        ],
    )
    def test_sensitive_to_fields(self, override):
        assert _config(**override).fingerprint() != _config().fingerprint()

    def test_sensitive_to_plan(self):
        other = FeaturePlan(use_acoustic=("loudness", "alpha_ratio"), use_va=True)
        assert _config(plan=other).fingerprint() != _config().fingerprint()


class TestGridSpec:
    def test_reference_hidden_size_default_grid(self):
        assert GridSpec().reference_hidden_size == 60

    def test_reference_hidden_size_unsorted_pair(self):
        assert GridSpec(hidden_sizes=(40, 20)).reference_hidden_size == 20

    def test_reference_hidden_size_singleton(self):
        assert GridSpec(hidden_sizes=(12,)).reference_hidden_size == 12

    def test_reference_hidden_size_even_count(self):
        assert GridSpec(hidden_sizes=(1, 2, 3, 4)).reference_hidden_size == 2

    def test_validation(self):
        with pytest.raises(ConfigError, match="empty"):
            GridSpec(hidden_sizes=())
        with pytest.raises(ConfigError, match="positive"):
            GridSpec(learning_rates=(0.0,))
        with pytest.raises(ConfigError, match="duplicate"):
            GridSpec(l2_values=(0.001, 0.001))


class _LogRunner:
    """Injected run_fn that scripts the held-out loss per hyperpoint."""

    def __init__(self, loss_fn):
        self.loss_fn = loss_fn
        self.calls = []

    def __call__(self, hyper, seed):
        self.calls.append((hyper, seed))
        return _result(seed=seed, heldout=self.loss_fn(hyper))


class TestGridSearch:
    def test_two_stage_argmin(self):
        config = _config(
            grid=GridSpec(
                hidden_sizes=(4, 8, 16),
                learning_rates=(0.001, 0.01),
                l2_values=(0.001, 0.0001),
            )
        )

        def scripted(h):
            # stage 1 runs at the reference hidden size (8); the winning
            # (lr, l2) column then decides stage 2 across hidden sizes
            if (h.learning_rate, h.l2_lambda) == (0.001, 0.0001):
                return {4: 0.6, 8: 0.3, 16: 0.4}[h.hidden_size]
            return {
                (0.001, 0.001): 0.9,
                (0.01, 0.001): 0.5,
                (0.01, 0.0001): 0.7,
            }[(h.learning_rate, h.l2_lambda)]

        runner = _LogRunner(scripted)
        result = grid_search(config, run_fn=runner)
        assert result.best == HyperPoint(8, 0.001, 0.0001)
        assert result.stage1 == (
            (0.001, 0.0001, 0.3),
            (0.001, 0.001, 0.9),
            (0.01, 0.0001, 0.7),
            (0.01, 0.001, 0.5),
        )
        assert result.stage2 == ((4, 0.6), (8, 0.3), (16, 0.4))
        # stage 1: 4 cells at the reference hidden size, one shared seed
        stage1_calls = runner.calls[:4]
        assert {h.hidden_size for h, _ in stage1_calls} == {8}
        assert {s for _, s in stage1_calls} == {derive_seed(config.seed, "grid-stage1")}
        # stage 2: every hidden size, the winning (lr, l2), paired seeds
        stage2_calls = runner.calls[4:]
        assert len(stage2_calls) == 3 * config.runs_per_hidden_size
        assert all(h.learning_rate == 0.001 and h.l2_lambda == 0.0001
                   for h, _ in stage2_calls)
        expected_seeds = [
            derive_seed(config.seed, f"grid-stage2-run-{k}")
            for k in range(config.runs_per_hidden_size)
        ]
        for i, hidden in enumerate((4, 8, 16)):
            block = stage2_calls[
                i * config.runs_per_hidden_size : (i + 1) * config.runs_per_hidden_size
            ]
            assert [h.hidden_size for h, _ in block] == [hidden] * len(block)
            assert [s for _, s in block] == expected_seeds

    def test_stage2_seeds_shared_across_hidden_sizes(self):
        config = _config(grid=GridSpec(hidden_sizes=(4, 8), learning_rates=(0.01,),
                                       l2_values=(0.0001,)))
        runner = _LogRunner(lambda h: 0.5)
        grid_search(config, run_fn=runner)
        per_hidden = {}
        for h, s in runner.calls:
            per_hidden.setdefault(h.hidden_size, []).append(s)
        assert per_hidden[4] == per_hidden[8]
        assert len(per_hidden[4]) == config.runs_per_hidden_size
        assert len(set(per_hidden[4])) == config.runs_per_hidden_size

    def test_full_singleton_trains_nothing(self):
        config = _config(
            grid=GridSpec(hidden_sizes=(4,), learning_rates=(0.01,), l2_values=(0.0001,))
        )
        runner = _LogRunner(lambda h: 0.5)
        result = grid_search(config, run_fn=runner)
        assert runner.calls == []
        assert result.best == HyperPoint(4, 0.01, 0.0001)
        assert result.stage1 == () and result.stage2 == ()

    def test_single_lr_l2_skips_stage1(self):
        config = _config(
            grid=GridSpec(hidden_sizes=(4, 8), learning_rates=(0.01,), l2_values=(0.0001,))
        )
        runner = _LogRunner(lambda h: {4: 0.4, 8: 0.6}[h.hidden_size])
        result = grid_search(config, run_fn=runner)
        assert result.stage1 == ()
        assert result.best == HyperPoint(4, 0.01, 0.0001)
        assert len(runner.calls) == 2 * config.runs_per_hidden_size

    def test_single_hidden_skips_stage2(self):
        config = _config(
            grid=GridSpec(hidden_sizes=(4,), learning_rates=(0.001, 0.01), l2_values=(0.0001,))
        )
        runner = _LogRunner(lambda h: {0.001: 0.7, 0.01: 0.3}[h.learning_rate])
        result = grid_search(config, run_fn=runner)
        assert result.stage2 == ()
        assert result.best == HyperPoint(4, 0.01, 0.0001)
        assert len(runner.calls) == 2

    def test_ties_break_to_smaller_values(self):
        config = _config(
            grid=GridSpec(
                hidden_sizes=(16, 4, 8),
                learning_rates=(0.01, 0.001),
                l2_values=(0.001, 0.0001),
            )
        )
        runner = _LogRunner(lambda h: 0.5)  # every point identical
        result = grid_search(config, run_fn=runner)
        assert result.best == HyperPoint(4, 0.001, 0.0001)

    def test_divergence_carries_config_fingerprint(self):
        config = _config(
            grid=GridSpec(hidden_sizes=(4,), learning_rates=(0.001, 0.01), l2_values=(0.0001,))
        )

        def exploding(hyper, seed):
            raise TrainingDiverged("lstm_input_weights", "step 5")

        with pytest.raises(TrainingDiverged) as err:
            grid_search(config, run_fn=exploding)
        assert f"config {config.fingerprint()}" in str(err.value)
        assert "step 5" in str(err.value)
        assert err.value.block == "lstm_input_weights"

    def test_needs_runner_or_run_fn(self):
        with pytest.raises(ConfigError, match="runner"):
            grid_search(_config())


class TestFinalEvaluation:
    def test_seeds_and_sorting(self):
        config = _config(final_runs=4)
        runner = _LogRunner(lambda h: 0.5)
        final = final_evaluation(config, HyperPoint(4, 0.01, 0.0001), run_fn=runner)
        expected_seeds = [
            derive_seed(config.seed, f"final-run-{k:02d}") for k in range(4)
        ]
        assert [s for _, s in runner.calls] == expected_seeds
        assert [r.seed for r in final.results] == sorted(expected_seeds)

    def test_mean_and_std_against_plain_python(self):
        config = _config(final_runs=3)
        losses = iter([0.5, 0.2, 0.8])

        def run_fn(hyper, seed):
            return _result(seed=seed, heldout=next(losses))

        final = final_evaluation(config, HyperPoint(4, 0.01, 0.0001), run_fn=run_fn)
        values = [r.heldout_loss for r in final.results]
        mean = sum(values) / len(values)
        var = sum((v - mean) ** 2 for v in values) / len(values)
        assert final.mean["heldout_loss"] == pytest.approx(mean, abs=1e-15)
        assert final.std["heldout_loss"] == pytest.approx(math.sqrt(var), abs=1e-15)

    def test_single_run_has_zero_std(self):
        config = _config(final_runs=1)
        final = final_evaluation(
            config, HyperPoint(4, 0.01, 0.0001), run_fn=lambda h, s: _result(seed=s)
        )
        assert all(v == 0.0 for v in final.std.values())

    def test_aggregates_every_numeric_column(self):
        config = _config(final_runs=2)
        final = final_evaluation(
            config, HyperPoint(4, 0.01, 0.0001), run_fn=lambda h, s: _result(seed=s)
        )
        assert set(final.mean) == set(RESULT_COLUMNS[2:])
        assert set(final.std) == set(RESULT_COLUMNS[2:])


class TestResultsCsv:
    def _final(self):
        results = tuple(
            _result(seed=s, heldout=l, f_pause50=f)
            for s, l, f in ((3, 0.5, 0.81), (1, 0.25, 0.907), (2, 0.125, 0.64))
        )
        config = _config(final_runs=3)
        it = iter(results)
        return final_evaluation(
            config, HyperPoint(4, 0.01, 0.0001), run_fn=lambda h, s: next(it)
        )

    def test_round_trip_exact_floats(self, tmp_path):
        final = self._final()
        path = tmp_path / "results.csv"
        write_results_csv(path, final)
        rows = read_results_csv(path)
        assert len(rows) == 5  # 3 runs + mean + std
        assert [r["seed"] for r in rows[3:]] == ["mean", "std"]
        for row, result in zip(rows, final.results):
            assert float(row["heldout_loss"]) == result.heldout_loss
            assert float(row["f_pause50"]) == result.f_pause50

    def test_mean_row_matches_recomputed_mean(self, tmp_path):
        final = self._final()
        path = tmp_path / "results.csv"
        write_results_csv(path, final)
        rows = read_results_csv(path)
        runs, mean_row = rows[:3], rows[3]
        for col in RESULT_COLUMNS[2:]:
            recomputed = np.mean([float(r[col]) for r in runs])
            assert float(mean_row[col]) == pytest.approx(recomputed, abs=1e-15)

    def test_byte_identical_rewrites(self, tmp_path):
        final = self._final()
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        write_results_csv(a, final)
        write_results_csv(b, final)
        assert a.read_bytes() == b.read_bytes()


CANDIDATES = ("alpha_ratio", "f0_semitone", "loudness", "mfcc1")


class TestSfs:
    def test_informative_features_picked_first(self):
        config = _config(sfs=SfsSpec(steps=3, hidden_size=4))
        informative = {"loudness", "f0_semitone"}

        def fake_eval(subset, seed):
            return 1.0 - 0.4 * len(set(subset) & informative) + 0.01 * len(subset)

        result = sequential_forward_selection(
            config, CANDIDATES, evaluate_subset=fake_eval
        )
        # equal gain ties break to the lexicographically smaller name
        assert result.chosen[:2] == ("f0_semitone", "loudness")
        assert result.chosen[2] == "alpha_ratio"
        assert [s.step for s in result.steps] == [1, 2, 3]

    def test_loss_sequence_reported_verbatim(self):
        config = _config(sfs=SfsSpec(steps=3, hidden_size=4))
        by_size = {1: 0.5, 2: 0.7, 3: 0.3}
        result = sequential_forward_selection(
            config, CANDIDATES, evaluate_subset=lambda s, _: by_size[len(s)]
        )
        assert [s.heldout_loss for s in result.steps] == [0.5, 0.7, 0.3]

    def test_each_step_shares_one_seed(self):
        config = _config(sfs=SfsSpec(steps=2, hidden_size=4))
        calls = []

        def fake_eval(subset, seed):
            calls.append((subset, seed))
            return float(len(subset))

        sequential_forward_selection(config, CANDIDATES, evaluate_subset=fake_eval)
        step1 = [s for subset, s in calls if len(subset) == 1]
        step2 = [s for subset, s in calls if len(subset) == 2]
        assert len(set(step1)) == 1 and len(step1) == 4
        assert len(set(step2)) == 1 and len(step2) == 3
        assert step1[0] == derive_seed(config.seed, "sfs-step-0")
        assert step2[0] == derive_seed(config.seed, "sfs-step-1")
        assert step1[0] != step2[0]

    def test_subsets_passed_sorted(self):
        config = _config(sfs=SfsSpec(steps=2, hidden_size=4))
        seen = []

        def fake_eval(subset, seed):
            seen.append(subset)
            return 1.0 if "mfcc1" not in subset else 0.0  # force mfcc1 first

        sequential_forward_selection(config, CANDIDATES, evaluate_subset=fake_eval)
        assert all(list(s) == sorted(s) for s in seen)
        assert ("alpha_ratio", "mfcc1") in seen

    def test_zero_budget_selects_nothing(self):
        config = _config(sfs=SfsSpec(steps=0, hidden_size=4))
        result = sequential_forward_selection(
            config, CANDIDATES, evaluate_subset=lambda s, _: 0.0
        )
        assert result == SfsResult(chosen=(), steps=())

    def test_budget_beyond_candidates_rejected(self):
        config = _config(sfs=SfsSpec(steps=5, hidden_size=4))
        with pytest.raises(ConfigError, match="budget"):
            sequential_forward_selection(
                config, CANDIDATES, evaluate_subset=lambda s, _: 0.0
            )

    def test_duplicate_candidates_rejected(self):
        config = _config(sfs=SfsSpec(steps=1, hidden_size=4))
        with pytest.raises(ConfigError, match="duplicate"):
            sequential_forward_selection(
                config, ("loudness", "loudness"), evaluate_subset=lambda s, _: 0.0
            )

    def test_report_round_trip(self, tmp_path):
        result = SfsResult(
            chosen=("loudness", "mfcc1"),
            steps=(SfsStep(1, "loudness", 0.52), SfsStep(2, "mfcc1", 0.37)),
        )
        path = tmp_path / "sfs.tsv"
        write_sfs_report(path, result)
        assert read_sfs_report(path) == list(result.steps)

    def test_report_header_validated(self, tmp_path):
        path = tmp_path / "sfs.tsv"
        path.write_text("feature\tstep\theldout_loss\n")
        with pytest.raises(ConfigError, match="header"):
            read_sfs_report(path)


class TestRunResultValidation:
    def test_f_score_range(self):
        with pytest.raises(ConfigError, match="f_pause50"):
            _result(seed=1, f_pause50=1.2)

    def test_negative_loss(self):
        with pytest.raises(ConfigError, match="heldout_loss"):
            _result(seed=1, heldout=-0.1)

    def test_nan_allowed(self):
        r = _result(seed=1, f_overlap=math.nan, heldout=math.nan)
        assert math.isnan(r.f_overlap)


class TestSplitSessions:
    def test_partition(self):
        sessions = [make_session(session_id=f"s-{i}", n_frames=80, seed=i) for i in range(4)]
        split = SplitSpec(("s-0", "s-3"), ("s-1",), ("s-2",))
        train, heldout, test = split_sessions(sessions, split)
        assert [s.session_id for s in train] == ["s-0", "s-3"]
        assert [s.session_id for s in heldout] == ["s-1"]
        assert [s.session_id for s in test] == ["s-2"]

    def test_missing_session_rejected(self):
        sessions = [make_session(session_id="s-0", n_frames=80)]
        split = SplitSpec(("s-0",), ("ghost",), ())
        with pytest.raises(ConfigError, match="ghost"):
            split_sessions(sessions, split)


@pytest.fixture(scope="module")
def tiny_corpus_setup():
    sessions = generate(SynthConfig(seed=91, n_sessions=4, session_length_frames=200))
    ids = [s.session_id for s in sessions]
    config = ExperimentConfig(
        split=SplitSpec((ids[0], ids[1]), (ids[2],), (ids[3],)),
        plan=FeaturePlan(use_acoustic=("loudness",), use_va=True),
        seed=11,
        grid=GridSpec(hidden_sizes=(3,), learning_rates=(0.01,), l2_values=(0.0001,)),
        runs_per_hidden_size=1,
        final_runs=2,
        schedule=TrainingSchedule(chunk_frames=600, max_epochs=1, patience=3),
        sfs=SfsSpec(steps=1, hidden_size=3),
    )
    return config, sessions


@pytest.mark.filterwarnings("ignore::turntaking.errors.DataWarning")
class TestCorpusRunner:
    def test_run_is_deterministic(self, tiny_corpus_setup):
        config, sessions = tiny_corpus_setup
        runner = CorpusRunner(config, sessions)
        hyper = HyperPoint(3, 0.01, 0.0001)
        a = runner.run(hyper, seed=5)
        b = runner.run(hyper, seed=5)
        assert a == b
        assert a.fingerprint == config.fingerprint()

    def test_parallel_matches_sequential(self, tiny_corpus_setup):
        config, sessions = tiny_corpus_setup
        hyper = HyperPoint(3, 0.01, 0.0001)
        seq = final_evaluation(config, hyper, runner=CorpusRunner(config, sessions), jobs=1)
        par = final_evaluation(config, hyper, runner=CorpusRunner(config, sessions), jobs=2)

        def same(a, b):
            return a == b or (math.isnan(a) and math.isnan(b))

        for ra, rb in zip(seq.results, par.results):
            assert ra.fingerprint == rb.fingerprint and ra.seed == rb.seed
            for name in RESULT_COLUMNS[2:]:
                assert same(getattr(ra, name), getattr(rb, name)), name
        for name in RESULT_COLUMNS[2:]:
            assert same(seq.mean[name], par.mean[name])
            assert same(seq.std[name], par.std[name])

    def test_sfs_candidate_plans_vary_only_acoustic(self, tiny_corpus_setup):
        config, sessions = tiny_corpus_setup
        runner = CorpusRunner(config, sessions)
        loss_a = runner.heldout_bce(("loudness",), seed=5)
        loss_b = runner.heldout_bce(("loudness", "alpha_ratio"), seed=5)
        assert loss_a != loss_b
        assert math.isfinite(loss_a) and math.isfinite(loss_b)
