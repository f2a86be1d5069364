from pathlib import Path

import orjson
import pytest
import tomlkit

from eapmd5_lab.experiments.compare import run_comparison, write_comparison_toml
from eapmd5_lab.experiments.sweep import (
    SweepRow,
    format_summary,
    run_sweep,
    summarize_sweep,
    synthetic_dictionary,
)


def test_synthetic_dictionary():
    dictionary = synthetic_dictionary(300, seed=4)
    assert len(dictionary) == 300
    assert len(set(dictionary.words)) == 300
    assert all(8 <= len(word) <= 12 and word.isalpha() for word in dictionary)
    assert synthetic_dictionary(300, seed=4) == dictionary
    assert synthetic_dictionary(300, seed=5) != dictionary


def test_sweep_slope():
    dictionary = synthetic_dictionary(50, seed=0)
    rows = run_sweep([4, 6, 8], 10, dictionary, seed=3)
    assert len(rows) == 30
    for row in rows:
        assert row.dictionary_evaluations == row.index + 1
        assert row.bruteforce_found
        assert row.probe_found
        assert row.probe_evaluations == row.index + 1
        assert row.bruteforce_evaluations > row.index * 2**row.entropy_bits

    summary = summarize_sweep(rows)
    assert [entry.entropy_bits for entry in summary.per_entropy] == [4, 6, 8]
    assert summary.slope == pytest.approx(1.0, abs=0.2)
    assert all(entry.probe_success_rate == 1.0 for entry in summary.per_entropy)
    assert "slope of log2_ratio over entropy_bits" in format_summary(summary)

    decoded = orjson.loads(summary.to_json())
    assert decoded["slope"] == pytest.approx(summary.slope)
    assert len(decoded["per_entropy"]) == 3


def test_sweep_is_deterministic():
    dictionary = synthetic_dictionary(20, seed=0)
    assert run_sweep([3], 5, dictionary, seed=9) == run_sweep(
        [3], 5, dictionary, seed=9
    )


def test_summary_single_entropy():
    rows = [SweepRow(4, 0, 1, 2, 40, True, 2, True)]
    summary = summarize_sweep(rows)
    assert summary.slope is None
    assert summary.per_entropy[0].ratio == 20.0


def test_sweep_needs_words():
    with pytest.raises(ValueError):
        run_sweep([4], 1, synthetic_dictionary(0))


def test_comparison(tmp_path: Path):
    dictionary = synthetic_dictionary(30, seed=2)
    report = run_comparison(8, 4, dictionary, seed=1)
    assert report.baseline.replays_accepted_within_window == 8
    assert report.baseline.replays_accepted_stale == 8
    assert report.hardened.replays_accepted_within_window == 0
    assert report.hardened.replays_accepted_stale == 0
    assert report.baseline.attack_success_rate == 1.0
    assert report.hardened.attack_success_rate == 1.0
    assert report.probe_success_rate == 1.0
    assert report.baseline.md5_calls_per_session == 2
    assert report.hardened.md5_calls_per_session == 4
    assert report.hardened.mean_attack_evaluations > (
        report.baseline.mean_attack_evaluations
    )
    assert "transcript probe" in report.format_table()

    path = tmp_path.joinpath("comparison.toml")
    write_comparison_toml(report, path)
    document = tomlkit.parse(path.read_text()).unwrap()
    assert document["trials"] == 8
    assert document["hardened"]["claimed_replay_robust"] is True
    assert document["baseline"]["claimed_attack_complexity"] == "2^c"


def test_comparison_without_seed_has_no_null():
    report = run_comparison(1, 2, synthetic_dictionary(5, seed=0))
    assert "seed" not in report.to_dict()
    assert orjson.loads(report.to_json())["trials"] == 1
