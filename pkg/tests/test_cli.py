import csv
import json
import subprocess
import sys
from pathlib import Path

from parcot.cli import main
from parcot.configs import av_graph_path, av_template_path

DATA = Path(__file__).parent / "data"
GOLD = Path(__file__).parent / "goldens"

AV_T = str(av_template_path())
AV_G = str(av_graph_path())
CHAIN_T = str(DATA / "chain_template.json")
CHAIN_G = str(DATA / "chain_graph.json")
EDGELESS_T = str(DATA / "edgeless_template.json")
EDGELESS_G = str(DATA / "edgeless_graph.json")


def run(capsys, argv):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestValidate:
    def test_shipped_configs_golden(self, capsys):
        code, out, err = run(capsys, ["validate", "--template", AV_T, "--graph", AV_G])
        assert code == 0
        assert out == (GOLD / "validate_av.txt").read_text()
        assert err == ""

    def test_unknown_field_exit_2_names_field(self, capsys):
        code, out, err = run(
            capsys,
            ["validate", "--template", AV_T, "--graph", str(DATA / "unknown_field_graph.json")],
        )
        assert code == 2
        assert "wheather" in err

    def test_cyclic_graph_exit_2_lists_cycle(self, capsys):
        code, out, err = run(
            capsys,
            ["validate", "--template", CHAIN_T, "--graph", str(DATA / "cyclic_graph.json")],
        )
        assert code == 2
        assert "cycle" in err
        assert "->" in err

    def test_missing_file_exit_2(self, capsys):
        code, out, err = run(capsys, ["validate", "--template", "/nope/t.json"])
        assert code == 2
        assert "not found" in err

    def test_all_errors_listed(self, capsys, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(
            json.dumps(
                {
                    "vocab_size": 256,
                    "terminator": 0,
                    "fields": [
                        {"name": "a", "max_len": 0},
                        {"name": "a", "max_len": 2},
                    ],
                }
            )
        )
        code, out, err = run(capsys, ["validate", "--template", str(bad)])
        assert code == 2
        assert "max_len" in err and "duplicate" in err


class TestPlan:
    def test_chain_golden(self, capsys):
        code, out, _ = run(
            capsys,
            ["plan", "--template", CHAIN_T, "--graph", CHAIN_G, "--lengths", "3,4,5"],
        )
        assert code == 0
        assert out == (GOLD / "plan_chain.txt").read_text()

    def test_edgeless_golden(self, capsys):
        code, out, _ = run(
            capsys,
            ["plan", "--template", EDGELESS_T, "--graph", EDGELESS_G, "--lengths", "5,5,5,5"],
        )
        assert code == 0
        assert out == (GOLD / "plan_edgeless.txt").read_text()

    def test_av_default_lengths_degree_at_least_3(self, capsys):
        code, out, _ = run(capsys, ["plan", "--template", AV_T, "--graph", AV_G])
        assert code == 0
        degree = float(out.splitlines()[2].split()[-1])
        assert degree >= 3.0

    def test_schedule_trace_written(self, capsys, tmp_path):
        trace = tmp_path / "plan_trace.jsonl"
        code, _, _ = run(
            capsys,
            [
                "plan",
                "--template",
                CHAIN_T,
                "--graph",
                CHAIN_G,
                "--lengths",
                "3,4,5",
                "--trace",
                str(trace),
            ],
        )
        assert code == 0
        records = [json.loads(line) for line in trace.read_text().splitlines()]
        assert len(records) == 12
        assert records[0] == {"pass": 1, "fields": ["f0"], "completed": []}
        assert records[-1]["completed"] == ["f2"]

    def test_bad_lengths_exit_2(self, capsys):
        code, _, err = run(
            capsys, ["plan", "--template", CHAIN_T, "--graph", CHAIN_G, "--lengths", "1,2"]
        )
        assert code == 2
        assert "--lengths" in err


class TestDecode:
    def test_golden_bytes_no_timing(self, capsys, tmp_path):
        out_path = tmp_path / "dec.json"
        code, out, _ = run(
            capsys,
            [
                "decode",
                "--template",
                AV_T,
                "--graph",
                AV_G,
                "--model",
                "mock",
                "--seed",
                "0",
                "--mode",
                "parallel",
                "--no-timing",
                "--out",
                str(out_path),
            ],
        )
        assert code == 0
        assert out == (GOLD / "decode_av_mock_stdout.txt").read_text()
        assert out_path.read_bytes() == (GOLD / "decode_av_mock.json").read_bytes()
        rendered = Path(str(out_path) + ".txt")
        assert rendered.read_bytes() == (GOLD / "decode_av_mock.txt").read_bytes()

    def test_repeated_invocations_byte_identical(self, capsys, tmp_path):
        args = [
            "decode",
            "--template",
            AV_T,
            "--graph",
            AV_G,
            "--model",
            "mock",
            "--seed",
            "7",
            "--no-timing",
        ]
        a = run(capsys, args + ["--out", str(tmp_path / "a.json")])
        b = run(capsys, args + ["--out", str(tmp_path / "b.json")])
        assert a[0] == b[0] == 0
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_parallel_vs_oracle_identical_rendered_text(self, capsys, tmp_path):
        outputs = {}
        for mode in ("parallel", "oracle"):
            code, _, _ = run(
                capsys,
                [
                    "decode",
                    "--template",
                    AV_T,
                    "--graph",
                    AV_G,
                    "--model",
                    "mock",
                    "--seed",
                    "3",
                    "--mode",
                    mode,
                    "--no-timing",
                    "--out",
                    str(tmp_path / f"{mode}.json"),
                ],
            )
            assert code == 0
            outputs[mode] = (tmp_path / f"{mode}.json.txt").read_bytes()
        assert outputs["parallel"] == outputs["oracle"]

    def test_autoregressive_degree_one(self, capsys, tmp_path):
        code, out, _ = run(
            capsys,
            [
                "decode",
                "--template",
                CHAIN_T,
                "--graph",
                CHAIN_G,
                "--model",
                "mock",
                "--mode",
                "autoregressive",
                "--no-timing",
                "--out",
                str(tmp_path / "ar.json"),
            ],
        )
        assert code == 0
        assert "parallel_degree 1.000000" in out

    def test_missing_weights_exit_2(self, capsys):
        code, _, err = run(
            capsys,
            [
                "decode",
                "--template",
                AV_T,
                "--graph",
                AV_G,
                "--weights",
                "/nope/weights.bin",
            ],
        )
        assert code == 2
        assert "weights" in err

    def test_weights_roundtrip_decode(self, capsys, tmp_path):
        from parcot import ReferenceTransformer

        weights = tmp_path / "w.bin"
        ReferenceTransformer(vocab_size=256, seed=5).save_weights(weights)
        code, out, _ = run(
            capsys,
            [
                "decode",
                "--template",
                CHAIN_T,
                "--graph",
                CHAIN_G,
                "--weights",
                str(weights),
                "--no-timing",
                "--out",
                str(tmp_path / "w.json"),
            ],
        )
        assert code == 0
        assert "pass_count" in out

    def test_corrupt_weights_blob_exit_1(self, capsys, tmp_path):
        from parcot import ReferenceTransformer

        weights = tmp_path / "w.bin"
        ReferenceTransformer(vocab_size=256, seed=5).save_weights(weights)
        weights.write_bytes(weights.read_bytes()[:100])  # truncate blob
        code, _, err = run(
            capsys,
            ["decode", "--template", CHAIN_T, "--graph", CHAIN_G, "--weights", str(weights)],
        )
        assert code == 1
        assert "runtime error" in err

    def test_stdout_mode_handles_arbitrary_bytes(self, capsys):
        # without --out, result JSON and rendered text stream to stdout; raw
        # generated bytes must not crash terminal encoding
        code, out, _ = run(
            capsys,
            [
                "decode",
                "--template",
                AV_T,
                "--graph",
                AV_G,
                "--model",
                "mock",
                "--seed",
                "0",
                "--no-timing",
            ],
        )
        assert code == 0
        assert '"pass_count": 76' in out
        assert "lighting: " in out

    def test_trace_file(self, capsys, tmp_path):
        trace = tmp_path / "t.jsonl"
        code, _, _ = run(
            capsys,
            [
                "decode",
                "--template",
                CHAIN_T,
                "--graph",
                CHAIN_G,
                "--model",
                "mock",
                "--no-timing",
                "--out",
                str(tmp_path / "o.json"),
                "--trace",
                str(trace),
            ],
        )
        assert code == 0
        records = [json.loads(line) for line in trace.read_text().splitlines()]
        assert records[0]["pass"] == 1


class TestBench:
    def test_chain_speedup_column_all_one(self, capsys, tmp_path):
        out_csv = tmp_path / "bench.csv"
        code, out, _ = run(
            capsys,
            [
                "bench",
                "--template",
                CHAIN_T,
                "--graph",
                CHAIN_G,
                "--model",
                "mock",
                "--prompts",
                "1",
                "--warmup",
                "0",
                "--no-timing",
                "--out",
                str(out_csv),
            ],
        )
        assert code == 0
        with open(out_csv, newline="") as fh:
            rows = list(csv.reader(fh))
        assert len(rows) == 2
        speedup_col = rows[0].index("speedup")
        assert all(row[speedup_col] == "1.000000" for row in rows[1:])

    def test_av_bench_summary(self, capsys, tmp_path):
        out_csv = tmp_path / "bench.csv"
        code, out, _ = run(
            capsys,
            [
                "bench",
                "--template",
                AV_T,
                "--graph",
                AV_G,
                "--model",
                "mock",
                "--prompts",
                "3",
                "--warmup",
                "0",
                "--no-timing",
                "--out",
                str(out_csv),
            ],
        )
        assert code == 0
        summary = json.loads(out)
        assert summary["records"] == 3
        assert summary["mean"]["speedup"] == summary["mean"]["parallel_degree"]
        assert summary["mean"]["speedup"] >= 3.0
        assert json.loads(Path(str(out_csv) + ".summary.json").read_text()) == summary

    def test_warmup_zero_valid(self, capsys, tmp_path):
        code, _, _ = run(
            capsys,
            [
                "bench",
                "--template",
                CHAIN_T,
                "--graph",
                CHAIN_G,
                "--model",
                "mock",
                "--prompts",
                "1",
                "--warmup",
                "0",
                "--no-timing",
                "--out",
                str(tmp_path / "b.csv"),
            ],
        )
        assert code == 0

    def test_bad_prompt_count_exit_2(self, capsys):
        code, _, err = run(
            capsys,
            [
                "bench",
                "--template",
                CHAIN_T,
                "--graph",
                CHAIN_G,
                "--prompts",
                "0",
            ],
        )
        assert code == 2
        assert "--prompts" in err


class TestEntryPoint:
    def test_module_invocation(self):
        proc = subprocess.run(
            [
                sys.executable,
                "-m",
                "parcot.cli",
                "validate",
                "--template",
                AV_T,
                "--graph",
                AV_G,
            ],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0
        assert "30 fields" in proc.stdout

    def test_usage_error_exit_2(self):
        proc = subprocess.run(
            [sys.executable, "-m", "parcot.cli", "frobnicate"],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 2
