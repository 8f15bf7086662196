import json

import numpy as np
import pytest

from langgeo.cli import (
    EXIT_NUMERIC,
    EXIT_OK,
    EXIT_USAGE,
    EXIT_VALIDATION,
    main,
)
from langgeo.formats import (
    read_matrix,
    read_partition_csv,
    read_vector,
    save_layer_dumps,
)


@pytest.fixture
def synth_dir(tmp_path):
    out = tmp_path / "synth"
    code = main(
        [
            "synth",
            "--families", "3",
            "--members", "3",
            "--bits", "256",
            "--seed", "1",
            "--runs", "2",
            "--output", str(out),
        ]
    )
    assert code == EXIT_OK
    return out


class TestScoreAndBinarize:
    def test_full_vector_flow(self, tmp_path, rng):
        dumps = tmp_path / "dumps.npz"
        save_layer_dumps(
            dumps,
            {
                0: (rng.normal(size=(4, 3)), rng.normal(size=(16, 3))),
                1: (rng.normal(size=(5, 4)), rng.normal(size=(16, 4))),
            },
        )
        scores = tmp_path / "scores.npz"
        assert main(["score", str(dumps), "--output", str(scores)]) == EXIT_OK

        vector_path = tmp_path / "uk.lgv"
        code = main(
            [
                "binarize", str(scores),
                "--language", "uk",
                "--model", "m",
                "--corpus", "c",
                "--output", str(vector_path),
            ]
        )
        assert code == EXIT_OK
        vec = read_vector(vector_path)
        assert vec.language_tag == "uk"
        assert vec.n_bits == 4 * 3 + 5 * 4
        assert [lid for lid, _, _ in vec.layer_offsets] == [0, 1]

    def test_singular_hessian_exit_code(self, tmp_path):
        dumps = tmp_path / "dumps.npz"
        save_layer_dumps(dumps, {0: (np.ones((2, 3)), np.zeros((4, 3)))})
        scores = tmp_path / "scores.npz"
        code = main(
            ["score", str(dumps), "--output", str(scores), "--damping-lambda", "0"]
        )
        assert code == EXIT_NUMERIC


class TestStageComposition:
    def test_subcommands_compose_to_pipeline_output(self, synth_dir, tmp_path):
        # individually invoked stages
        dm = []
        for r in range(2):
            out = tmp_path / f"d{r}.lgd"
            vectors = sorted(str(p) for p in (synth_dir / f"run{r:02d}").glob("*.lgv"))
            assert main(["distmat", *vectors, "--output", str(out)]) == EXIT_OK
            dm.append(out)
        agg = tmp_path / "agg.lgd"
        assert main(["aggregate", str(dm[0]), str(dm[1]), "--output", str(agg)]) == EXIT_OK
        emb = tmp_path / "emb.csv"
        assert main(["embed", str(agg), "--output", str(emb)]) == EXIT_OK
        metrics = tmp_path / "metrics.json"
        assert (
            main(
                [
                    "evaluate", str(emb),
                    "--reference", str(synth_dir / "truth.csv"),
                    "--seed", "1",
                    "--output", str(metrics),
                ]
            )
            == EXIT_OK
        )
        layout = tmp_path / "layout.json"
        svg = tmp_path / "layout.svg"
        assert (
            main(
                [
                    "layout", str(agg),
                    "--output", str(layout),
                    "--svg", str(svg),
                    "--groups", str(synth_dir / "truth.csv"),
                ]
            )
            == EXIT_OK
        )

        # one-shot pipeline on the same inputs
        pipe_out = tmp_path / "pipe"
        code = main(
            [
                "pipeline",
                "--config", str(synth_dir / "pipeline.json"),
                "--output", str(pipe_out),
                "--seed", "1",
            ]
        )
        assert code == EXIT_OK

        pipeline_agg = read_matrix(pipe_out / "aggregate.lgd")
        manual_agg = read_matrix(agg)
        np.testing.assert_array_equal(pipeline_agg.values, manual_agg.values)
        assert (pipe_out / "embedding.csv").read_text() == emb.read_text()
        pipeline_metrics = json.loads((pipe_out / "metrics.json").read_text())["truth"]
        manual_metrics = json.loads(metrics.read_text())
        assert pipeline_metrics == manual_metrics
        assert json.loads((pipe_out / "layout.json").read_text()) == json.loads(
            layout.read_text()
        )

    def test_mst_subcommand(self, synth_dir, tmp_path):
        vectors = sorted(str(p) for p in (synth_dir / "run00").glob("*.lgv"))
        dm = tmp_path / "d.lgd"
        main(["distmat", *vectors, "--output", str(dm)])
        tree_path = tmp_path / "tree.json"
        assert main(["mst", str(dm), "--output", str(tree_path)]) == EXIT_OK
        doc = json.loads(tree_path.read_text())
        assert len(doc["edges"]) == len(doc["nodes"]) - 1

    def test_cluster_subcommand(self, synth_dir, tmp_path):
        vectors = sorted(str(p) for p in (synth_dir / "run00").glob("*.lgv"))
        dm = tmp_path / "d.lgd"
        main(["distmat", *vectors, "--output", str(dm)])
        emb = tmp_path / "emb.csv"
        main(["embed", str(dm), "--output", str(emb)])
        part_path = tmp_path / "part.csv"
        assert main(
            ["cluster", str(emb), "--k", "3", "--seed", "1", "--output", str(part_path)]
        ) == EXIT_OK
        part = read_partition_csv(part_path)
        assert len(part.languages) == 9


class TestExitCodes:
    def test_usage_error_unknown_command(self):
        assert main(["frobnicate"]) == EXIT_USAGE

    def test_usage_error_missing_required(self):
        assert main(["embed"]) == EXIT_USAGE

    def test_validation_error_on_corrupt_file(self, tmp_path):
        bad = tmp_path / "bad.lgd"
        bad.write_bytes(b"LGD1garbage")
        assert main(["embed", str(bad), "--output", str(tmp_path / "e.csv")]) == EXIT_VALIDATION

    def test_validation_error_on_missing_file(self, tmp_path):
        missing = tmp_path / "no-such.lgv"
        code = main(
            ["distmat", str(missing), "--output", str(tmp_path / "d.lgd")]
        )
        assert code == EXIT_VALIDATION

    def test_help_exits_zero(self):
        assert main(["--help"]) == 0

    def test_version_exits_zero(self, capsys):
        assert main(["--version"]) == 0
        assert "langgeo" in capsys.readouterr().out


class TestCoveragePolicyFlag:
    def test_aggregate_refuses_holes_by_default(self, tmp_path, rng):
        from conftest import make_vector
        from langgeo.formats import write_vector
        from langgeo.metricspace import distance_matrix
        from langgeo.formats import write_matrix

        a = distance_matrix(
            [
                make_vector(rng.integers(0, 2, 64), language="aa"),
                make_vector(rng.integers(0, 2, 64), language="bb"),
            ]
        )
        b = distance_matrix(
            [
                make_vector(rng.integers(0, 2, 64), language="bb"),
                make_vector(rng.integers(0, 2, 64), language="cc"),
            ]
        )
        pa, pb = tmp_path / "a.lgd", tmp_path / "b.lgd"
        write_matrix(pa, a)
        write_matrix(pb, b)
        out = tmp_path / "agg.lgd"
        report = tmp_path / "coverage.json"
        code = main(
            ["aggregate", str(pa), str(pb), "--output", str(out),
             "--coverage-report", str(report)]
        )
        assert code == EXIT_VALIDATION
        assert json.loads(report.read_text())["missing_pairs"] == [["aa", "cc"]]

        code = main(
            ["aggregate", str(pa), str(pb), "--output", str(out),
             "--missing-pairs", "drop"]
        )
        assert code == EXIT_OK
        assert read_matrix(out).fully_observed
