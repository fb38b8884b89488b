import json

import pytest

from pseudodet import (
    Box,
    DEFAULT_VIEWS,
    Detection,
    DetectorModel,
    SceneConfig,
    ViewPredictions,
    ViewSpec,
    aggregate_views,
    apply_view,
    generate_scenes,
    load_dataset,
    save_dataset,
    save_detections,
    simulate_detector,
)
from pseudodet.cli import main
from pseudodet.dataio import read_json, write_json

from conftest import build_corpus

DIMS = (640.0, 480.0)


@pytest.fixture
def corpus(tmp_path):
    return build_corpus(tmp_path)


def run_cli(*argv) -> int:
    return main([str(a) for a in argv])


class TestAggregateCommand:
    def test_emits_candidates(self, corpus, tmp_path):
        out = tmp_path / "candidates.json"
        code = run_cli("aggregate", "--detections", corpus["detections"],
                       "--dataset", corpus["dataset"], "--out", out)
        assert code == 0
        ds = load_dataset(out)
        assert ds.images
        assert all(a.score is not None for a in ds.annotations)

    def test_single_image_duplicate_boxes_kept_once(self, tmp_path):
        # two identical boxes, same class: only the higher score survives
        from pseudodet import Annotation, Category, Dataset, ImageInfo

        pool = Dataset(
            images=[ImageInfo(1, *DIMS, "u.png")],
            annotations=[],
            categories=[Category(1, "thing")],
        )
        save_dataset(pool, tmp_path / "pool.json")
        b = Box(10, 10, 50, 50)
        write_json(
            [
                {"image_id": 1, "category_id": 1, "bbox": [10, 10, 40, 40],
                 "score": 0.9, "view": "identity"},
                {"image_id": 1, "category_id": 1, "bbox": [10, 10, 40, 40],
                 "score": 0.8, "view": "identity"},
            ],
            tmp_path / "dets.json",
        )
        out = tmp_path / "cands.json"
        assert run_cli("aggregate", "--detections", tmp_path / "dets.json",
                       "--dataset", tmp_path / "pool.json", "--out", out) == 0
        ds = load_dataset(out)
        assert len(ds.annotations) == 1
        assert ds.annotations[0].score == 0.9
        assert ds.annotations[0].box == b

    def test_four_view_file_matches_library_aggregation(self, tmp_path):
        from pseudodet import Category, Dataset, ImageInfo, ImageDims

        dims = ImageDims(*DIMS)
        pool = Dataset(
            images=[ImageInfo(1, *DIMS, "u.png")],
            annotations=[],
            categories=[Category(1, "thing"), Category(2, "stuff")],
        )
        save_dataset(pool, tmp_path / "pool.json")
        per_view = []
        originals = {
            "identity": [Detection(1, Box(50, 50, 120, 120), 0.8)],
            "hflip": [Detection(1, Box(51, 50, 121, 120), 0.7)],
            "scale": [Detection(1, Box(50, 49, 120, 119), 0.75),
                      Detection(2, Box(300, 300, 330, 330), 0.65)],
            "hflip_scale": [Detection(1, Box(49, 50, 119, 120), 0.72)],
        }
        for kind, dets in originals.items():
            view = ViewSpec(kind)
            per_view.append(
                ViewPredictions(
                    view,
                    tuple(Detection(d.class_id, apply_view(d.box, view, dims), d.score)
                          for d in dets),
                )
            )
        save_detections({1: per_view}, tmp_path / "dets.json")
        out = tmp_path / "cands.json"
        assert run_cli("aggregate", "--detections", tmp_path / "dets.json",
                       "--dataset", tmp_path / "pool.json", "--out", out) == 0
        got = load_dataset(out)
        want = aggregate_views(per_view, dims, 0.5)
        assert len(got.annotations) == len(want)
        got_scores = sorted(a.score for a in got.annotations)
        assert got_scores == sorted(round(d.score, 6) for d in want)

    def test_missing_file_exits_2(self, tmp_path, corpus):
        code = run_cli("aggregate", "--detections", tmp_path / "absent.json",
                       "--dataset", corpus["dataset"], "--out", tmp_path / "o.json")
        assert code == 2

    def test_malformed_score_exits_2(self, tmp_path, corpus):
        write_json(
            [{"image_id": 9, "category_id": 1, "bbox": [1, 1, 5, 5], "score": 1.3,
              "view": "identity"}],
            tmp_path / "bad.json",
        )
        code = run_cli("aggregate", "--detections", tmp_path / "bad.json",
                       "--dataset", corpus["dataset"], "--out", tmp_path / "o.json")
        assert code == 2


class TestThresholdCommand:
    def test_report_csv_and_figure(self, corpus, tmp_path):
        cands = tmp_path / "candidates.json"
        run_cli("aggregate", "--detections", corpus["detections"],
                "--dataset", corpus["dataset"], "--out", cands)
        out_dir = tmp_path / "thr"
        assert run_cli("threshold", "--candidates", cands, "--out-dir", out_dir) == 0
        report = read_json(out_dir / "thresholds.json")
        assert report["mode"] == "class-wise"
        assert (out_dir / "thresholds.csv").exists()
        assert (out_dir / "histograms.png").stat().st_size > 0

    def test_uniform_and_class_wise_modes(self, corpus, tmp_path):
        cands = tmp_path / "candidates.json"
        run_cli("aggregate", "--detections", corpus["detections"],
                "--dataset", corpus["dataset"], "--out", cands)
        for mode in ("uniform", "class-wise"):
            out_dir = tmp_path / mode
            assert run_cli("threshold", "--candidates", cands, "--out-dir", out_dir,
                           "--mode", mode, "--no-figures") == 0
            report = read_json(out_dir / "thresholds.json")
            assert report["mode"] == mode
            assert report["uniform_tau"] is not None
            assert report["classes"]

    def test_custom_bins_and_range(self, corpus, tmp_path):
        cands = tmp_path / "candidates.json"
        run_cli("aggregate", "--detections", corpus["detections"],
                "--dataset", corpus["dataset"], "--out", cands)
        out_dir = tmp_path / "thr"
        assert run_cli("threshold", "--candidates", cands, "--out-dir", out_dir,
                       "--bins", "6", "--range", "0.5:1.0", "--no-figures") == 0
        report = read_json(out_dir / "thresholds.json")
        assert report["config"]["n_bins"] == 6

    def test_bad_range_exits_4(self, corpus, tmp_path):
        code = run_cli("threshold", "--candidates", corpus["dataset"],
                       "--out-dir", tmp_path / "x", "--range", "0.9:0.5")
        assert code == 4

    def write_scored_candidates(self, tmp_path, scores):
        from pseudodet import Annotation, Category, Dataset, ImageInfo

        ds = Dataset(
            images=[ImageInfo(1, *DIMS, "u.png")],
            annotations=[
                Annotation(
                    i + 1, 1, 1,
                    Box(10.0 * (i % 60), 12.0 * (i // 60),
                        10.0 * (i % 60) + 8, 12.0 * (i // 60) + 8),
                    score=s,
                )
                for i, s in enumerate(scores)
            ],
            categories=[Category(1, "thing")],
        )
        p = tmp_path / "cands.json"
        save_dataset(ds, p)
        return p

    def test_bimodal_scores_give_interior_tau(self, tmp_path):
        import numpy as np

        rng = np.random.default_rng(0)
        scores = np.concatenate([
            np.clip(rng.normal(0.55, 0.02, 300), 0.5, 1.0),
            np.clip(rng.normal(0.95, 0.02, 300), 0.5, 1.0),
        ])
        cands = self.write_scored_candidates(tmp_path, [round(float(s), 6) for s in scores])
        out_dir = tmp_path / "thr"
        assert run_cli("threshold", "--candidates", cands, "--out-dir", out_dir,
                       "--mode", "uniform", "--no-figures") == 0
        tau = read_json(out_dir / "thresholds.json")["uniform_tau"]
        assert 0.55 < tau < 0.92

    def test_decaying_scores_give_last_bin_tau(self, tmp_path):
        import numpy as np

        rng = np.random.default_rng(1)
        scores = 0.5 + rng.exponential(0.12, 4000)
        scores = scores[scores <= 1.0][:2000]
        cands = self.write_scored_candidates(tmp_path, [round(float(s), 6) for s in scores])
        out_dir = tmp_path / "thr"
        assert run_cli("threshold", "--candidates", cands, "--out-dir", out_dir,
                       "--mode", "uniform", "--bins", "5", "--no-figures") == 0
        tau = read_json(out_dir / "thresholds.json")["uniform_tau"]
        assert tau == pytest.approx(0.9)


def run_stages(paths, out_dir, filter_extra=()):
    cands = out_dir / "candidates.json"
    out_dir.mkdir(parents=True, exist_ok=True)
    assert run_cli("aggregate", "--detections", paths["detections"],
                   "--dataset", paths["dataset"], "--out", cands) == 0
    assert run_cli("threshold", "--candidates", cands, "--out-dir", out_dir) == 0
    assert run_cli("filter", "--candidates", cands,
                   "--thresholds", out_dir / "thresholds.json",
                   "--labeled", paths["labeled"], "--unlabeled", paths["dataset"],
                   "--out-dir", out_dir, *filter_extra) == 0
    return out_dir


class TestFilterCommand:
    def test_outputs(self, corpus, tmp_path):
        out_dir = run_stages(corpus, tmp_path / "run")
        pseudo = load_dataset(out_dir / "pseudo.json")
        merged = load_dataset(out_dir / "merged.json")
        summary = read_json(out_dir / "summary.json")
        assert pseudo.images
        assert all(a.source == "pseudo" and a.alpha is not None for a in pseudo.annotations)
        assert summary["n_pseudo_images"] == len(pseudo.images)
        assert summary["n_pseudo_images"] <= summary["n_candidate_images"] <= summary["n_unlabeled"]
        n_gt = sum(1 for a in merged.annotations if a.source == "gt")
        labeled = load_dataset(corpus["labeled"])
        assert n_gt == len(labeled.annotations)
        assert len(merged.images) == len(labeled.images) + len(pseudo.images)

    def test_no_weights_sets_alpha_one(self, corpus, tmp_path):
        out_dir = run_stages(corpus, tmp_path / "run", filter_extra=("--no-weights",))
        pseudo = load_dataset(out_dir / "pseudo.json")
        assert all(a.alpha == 1.0 for a in pseudo.annotations)

    def test_overlapping_image_ids_exit_3(self, corpus, tmp_path):
        out_dir = tmp_path / "run"
        cands = out_dir / "candidates.json"
        out_dir.mkdir()
        run_cli("aggregate", "--detections", corpus["detections"],
                "--dataset", corpus["dataset"], "--out", cands)
        run_cli("threshold", "--candidates", cands, "--out-dir", out_dir, "--no-figures")
        # pass the unlabeled pool itself as the labeled set: ids collide
        code = run_cli("filter", "--candidates", cands,
                       "--thresholds", out_dir / "thresholds.json",
                       "--labeled", corpus["dataset"], "--out-dir", out_dir)
        assert code == 3


class TestWeightsCommand:
    def test_alphas_attached(self, corpus, tmp_path):
        out_dir = run_stages(corpus, tmp_path / "run")
        out = tmp_path / "weighted.json"
        assert run_cli("weights", "--dataset", out_dir / "pseudo.json",
                       "--thresholds", out_dir / "thresholds.json", "--out", out) == 0
        ds = load_dataset(out)
        assert all(a.alpha is not None for a in ds.annotations)

    def test_no_weights_flag(self, corpus, tmp_path):
        out_dir = run_stages(corpus, tmp_path / "run")
        out = tmp_path / "weighted.json"
        run_cli("weights", "--dataset", out_dir / "pseudo.json",
                "--thresholds", out_dir / "thresholds.json", "--out", out, "--no-weights")
        ds = load_dataset(out)
        assert all(a.alpha == 1.0 for a in ds.annotations)


class TestEvalCommand:
    def test_metrics_outputs(self, corpus, tmp_path):
        out_dir = run_stages(corpus, tmp_path / "run")
        eval_dir = tmp_path / "eval"
        # the generated pool keeps its hidden ground truth, usable for eval
        assert run_cli("eval", "--predictions", out_dir / "pseudo.json",
                       "--ground-truth", corpus["dataset"], "--out-dir", eval_dir) == 0
        metrics = read_json(eval_dir / "metrics.json")
        assert metrics["tp"] > 0
        assert 0.0 < metrics["f1"] <= 1.0
        assert set(metrics["per_class_ap"])
        assert (eval_dir / "per_class_ap.csv").exists()

    def test_against_simulated_ground_truth(self, tmp_path):
        scene = SceneConfig()
        gt = generate_scenes(scene, 30, seed=3)
        save_dataset(gt, tmp_path / "gt.json")
        paths = {
            "labeled": tmp_path / "gt.json",
            "dataset": tmp_path / "gt.json",
            "detections": tmp_path / "dets.json",
        }
        preds = simulate_detector(gt, DetectorModel(recall=0.9), DEFAULT_VIEWS, 3)
        save_detections(preds, paths["detections"])
        cands = tmp_path / "cands.json"
        run_cli("aggregate", "--detections", paths["detections"],
                "--dataset", paths["dataset"], "--out", cands)
        eval_dir = tmp_path / "eval"
        assert run_cli("eval", "--predictions", cands, "--ground-truth",
                       tmp_path / "gt.json", "--out-dir", eval_dir) == 0
        metrics = read_json(eval_dir / "metrics.json")
        assert metrics["recall"] > 0.8
        assert 0.0 < metrics["map"] <= 1.0
        assert (eval_dir / "pr_curves.png").stat().st_size > 0


class TestSimulateCommand:
    def write_config(self, tmp_path, **simulator):
        cfg = {
            "seed": 4,
            "simulator": {
                "n_labeled": 5,
                "n_unlabeled": 30,
                "iterations": 2,
                **simulator,
            },
        }
        p = tmp_path / "config.json"
        p.write_text(json.dumps(cfg))
        return p

    def test_loop_outputs(self, tmp_path):
        cfg = self.write_config(tmp_path)
        out_dir = tmp_path / "sim"
        assert run_cli("simulate", "--config", cfg, "--out-dir", out_dir) == 0
        report = read_json(out_dir / "report.json")
        assert len(report["iterations"]) == 2
        csv_text = (out_dir / "iterations.csv").read_text()
        assert csv_text.startswith("iteration,")
        assert (out_dir / "iterations.png").stat().st_size > 0
        assert (out_dir / "labeled.json").exists()
        assert (out_dir / "unlabeled.json").exists()

    def test_sweep_outputs(self, tmp_path):
        cfg = self.write_config(tmp_path)
        out_dir = tmp_path / "sweep"
        assert run_cli("simulate", "--config", cfg, "--out-dir", out_dir,
                       "--sweep", "0.5:0.9:0.1") == 0
        report = read_json(out_dir / "report.json")
        labels = [r["label"] for r in report["results"]]
        assert labels == ["ground", "0.5", "0.6", "0.7", "0.8", "0.9"]
        assert (out_dir / "sweep.csv").exists()
        assert (out_dir / "sweep.png").stat().st_size > 0

    def test_bad_sweep_spec_exits_4(self, tmp_path):
        cfg = self.write_config(tmp_path)
        assert run_cli("simulate", "--config", cfg, "--out-dir", tmp_path / "x",
                       "--sweep", "0.9:0.5:0.1") == 4

    def test_bad_simulator_key_exits_4(self, tmp_path):
        cfg = self.write_config(tmp_path, epochs=3)
        assert run_cli("simulate", "--config", cfg, "--out-dir", tmp_path / "x") == 4


class TestPipelineCommand:
    def write_config(self, tmp_path, paths, **extra):
        cfg = {
            "paths": {
                "detections": str(paths["detections"]),
                "dataset": str(paths["dataset"]),
                "labeled": str(paths["labeled"]),
                **{k: str(v) for k, v in extra.items()},
            },
        }
        p = tmp_path / "pipeline.json"
        p.write_text(json.dumps(cfg))
        return p

    def test_stage_composition_equals_pipeline(self, corpus, tmp_path):
        staged = run_stages(corpus, tmp_path / "staged")
        cfg = self.write_config(tmp_path, corpus)
        pipe_dir = tmp_path / "pipe"
        assert run_cli("pipeline", "--config", cfg, "--out-dir", pipe_dir) == 0
        for name in ("candidates.json", "thresholds.json", "pseudo.json", "merged.json"):
            assert (pipe_dir / name).read_bytes() == (staged / name).read_bytes()

    def test_rerun_is_byte_identical(self, corpus, tmp_path):
        cfg = self.write_config(tmp_path, corpus)
        d1, d2 = tmp_path / "run1", tmp_path / "run2"
        assert run_cli("pipeline", "--config", cfg, "--out-dir", d1) == 0
        assert run_cli("pipeline", "--config", cfg, "--out-dir", d2) == 0
        files = sorted(p.name for p in d1.iterdir())
        assert files == sorted(p.name for p in d2.iterdir())
        for name in files:
            assert (d1 / name).read_bytes() == (d2 / name).read_bytes(), name

    def test_eval_stage_runs_when_gt_provided(self, corpus, tmp_path):
        # hidden ground truth for the unlabeled pool comes from the generator
        scene = SceneConfig()
        unlabeled_gt = generate_scenes(scene, 40, 0, start_image_id=9, file_prefix="unlabeled")
        gt_path = tmp_path / "unlabeled_gt.json"
        save_dataset(unlabeled_gt, gt_path)
        cfg = self.write_config(tmp_path, corpus, eval_gt=gt_path)
        pipe_dir = tmp_path / "pipe"
        assert run_cli("pipeline", "--config", cfg, "--out-dir", pipe_dir) == 0
        metrics = read_json(pipe_dir / "metrics.json")
        assert metrics["f1"] > 0.5

    def test_missing_paths_exit_4(self, tmp_path):
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps({"paths": {"detections": "x.json"}}))
        assert run_cli("pipeline", "--config", p, "--out-dir", tmp_path / "o") == 4
