import asyncio
import json
from dataclasses import replace

import numpy as np
import pytest

from lcc_mixtures import simulation
from lcc_mixtures.custom_exceptions import ConfigurationError, ScenarioFailedError
from lcc_mixtures.estimation import FitConfig, InitScheme
from lcc_mixtures.gaussian import cholesky_factor, derive_rng, sample_gaussian
from lcc_mixtures.models import MixtureParams
from lcc_mixtures.simulation import (
    ReplicateOutcome,
    ScenarioRunner,
    frequency_rows,
    load_scenario,
    preset_scenario,
    render_summary_markdown,
    run_replicate,
    run_scenario,
    sample_mixture,
    scenario_from_dict,
    summarize,
)


@pytest.fixture
def small_scenario():
    scenario = preset_scenario("separated", n_replicates=4, seed=5, n_values=[300])
    return replace(scenario, k_range=(1, 3), config=FitConfig(n_restarts=2))


def test_single_component_sampling_is_the_gaussian_stream():
    params = MixtureParams.univariate([1.0], [2.0], [3.0])
    sample = sample_mixture(params, 10, derive_rng(1))
    expected = sample_gaussian([2.0], cholesky_factor([[3.0]]), derive_rng(1), size=10)
    assert np.array_equal(sample, expected)


def test_sampling_follows_the_weights():
    params = MixtureParams.univariate([0.3, 0.7], [-5.0, 5.0], [1.0, 1.0])
    sample, labels = sample_mixture(params, 100_000, derive_rng(2), return_labels=True)
    assert sample.shape == (100_000, 1)
    assert abs(np.mean(labels == 0) - 0.3) < 0.01
    again = sample_mixture(params, 100_000, derive_rng(2))
    assert np.array_equal(sample, again)


def test_presets():
    null = preset_scenario("null")
    assert null.n_values == (200, 2000)
    assert null.expected_k == 1
    assert null.criteria == ("bic", "icl_tau", "lcc_icl")
    four = preset_scenario("four-component", n_replicates=2)
    assert four.truth.d == 2
    assert four.k_values == [1, 2, 3, 4, 5, 6]
    with pytest.raises(ConfigurationError):
        preset_scenario("bogus")


def test_scenario_validation(small_scenario):
    with pytest.raises(ConfigurationError):
        replace(small_scenario, k_range=(3, 1))
    with pytest.raises(ConfigurationError):
        replace(small_scenario, n_replicates=0)
    with pytest.raises(ConfigurationError):
        replace(small_scenario, n_values=(1,))
    with pytest.raises(ConfigurationError):
        replace(small_scenario, criteria=("no_such_criterion",))


def test_scenario_from_json(tmp_path):
    description = {
        "name": "custom",
        "truth": {"weights": [0.5, 0.5], "means": [-3.0, 3.0], "variances": [1.0, 1.0]},
        "k_range": [1, 3],
        "n_values": [100, 400],
        "n_replicates": 5,
        "criteria": ["bic", "lcc-icl"],
        "n_restarts": 2,
        "fit": {"max_em_iters": 50, "init_scheme": "random_responsibilities"},
        "expected_k": 2,
    }
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(description))
    scenario = load_scenario(path)
    assert scenario.name == "custom"
    assert scenario.criteria == ("bic", "lcc_icl")
    assert scenario.config.n_restarts == 2
    assert scenario.config.max_em_iters == 50
    assert scenario.config.init_scheme is InitScheme.RANDOM_RESPONSIBILITIES
    assert scenario.truth.params.means[:, 0].tolist() == [-3.0, 3.0]

    with pytest.raises(ConfigurationError):
        scenario_from_dict({"truth": {"weights": [1.0]}})
    with pytest.raises(ConfigurationError):
        scenario_from_dict({**description, "fit": {"no_such_setting": 1}})
    path.write_text("{not json")
    with pytest.raises(ConfigurationError):
        load_scenario(path)


def test_run_replicate_is_deterministic(small_scenario):
    first = run_replicate(small_scenario, 300, 0)
    second = run_replicate(small_scenario, 300, 0)
    assert first == second
    assert not first.failed
    assert set(first.selected) >= {"bic", "icl_tau", "lcc_icl", "aic", "icl_map"}


def test_small_separated_study(small_scenario):
    report = asyncio.run(ScenarioRunner(small_scenario, threads=2).run())
    for criterion in small_scenario.criteria:
        assert report.table.modal_k(criterion, 300) == 2
    assert report.total_failed == 0
    assert report.trend["lcc_icl"] == [report.table.frequency("lcc_icl", 300, 2)]

    rows = frequency_rows(report)
    assert rows[0] == ["criterion", "n", "K", "frequency", "replicates"]
    assert len(rows) == 1 + 3 * 3
    assert all(row[4] == 4 for row in rows[1:])
    markdown = render_summary_markdown(report)
    assert markdown.startswith("# Scenario `separated`")
    assert "## Diagnostics" in markdown


def test_results_do_not_depend_on_the_thread_count(small_scenario):
    single = asyncio.run(ScenarioRunner(small_scenario, threads=1).run())
    for threads in (4, 8):
        parallel = asyncio.run(ScenarioRunner(small_scenario, threads=threads).run())
        assert single.outcomes == parallel.outcomes
        assert single.table == parallel.table


def test_too_many_failures_abort_the_study(small_scenario, monkeypatch):
    monkeypatch.setattr(
        simulation, "run_replicate", lambda scenario, n, replicate: ReplicateOutcome(n, replicate, {}, error="boom")
    )
    with pytest.raises(ScenarioFailedError) as excinfo:
        asyncio.run(ScenarioRunner(small_scenario).run())
    assert (excinfo.value.failed, excinfo.value.total) == (4, 4)


def test_failures_up_to_five_percent_are_tolerated(small_scenario, monkeypatch):
    scenario = replace(small_scenario, n_replicates=20)
    selected = {criterion: 2 for criterion in scenario.criteria}

    def failing_first(failures):
        def run(scenario, n, replicate):
            if replicate < failures:
                return ReplicateOutcome(n, replicate, {}, error="collapsed")
            return ReplicateOutcome(n, replicate, selected)

        return run

    monkeypatch.setattr(simulation, "run_replicate", failing_first(1))
    report = asyncio.run(ScenarioRunner(scenario).run())
    assert report.total_failed == 1
    assert report.table.modal_k("bic", 300) == 2

    monkeypatch.setattr(simulation, "run_replicate", failing_first(2))
    with pytest.raises(ScenarioFailedError) as excinfo:
        asyncio.run(ScenarioRunner(scenario).run())
    assert (excinfo.value.failed, excinfo.value.total) == (2, 20)


def test_summarize_counts_failures_and_agreement(small_scenario):
    outcomes = [
        ReplicateOutcome(300, 0, {"bic": 2, "icl_tau": 2, "lcc_icl": 2}),
        ReplicateOutcome(300, 1, {"bic": 3, "icl_tau": 2, "lcc_icl": 1}, non_converged=1),
        ReplicateOutcome(300, 2, {}, error="collapsed"),
    ]
    report = summarize(small_scenario, outcomes)
    assert report.failed == {300: 1}
    assert report.non_converged == {300: 1}
    assert report.agreement == {300: 0.5}
    assert report.table.frequency("bic", 300, 3) == 0.5
    assert report.table.replicates[("bic", 300)] == 2
    assert report.table.modal_k("lcc_icl", 300) == 1


@pytest.mark.slow
def test_separated_truth_is_recovered_by_every_criterion():
    table = run_scenario(preset_scenario("separated", n_replicates=50), threads=4)
    for criterion in ("bic", "icl_tau", "lcc_icl"):
        assert table.frequency(criterion, 1000, 2) >= 0.9


@pytest.mark.slow
def test_null_truth_selects_a_single_component():
    table = run_scenario(preset_scenario("null", n_replicates=50), threads=4)
    assert table.frequency("lcc_icl", 2000, 1) >= 0.9
    # nondecreasing along n up to one replicate of slack
    assert table.frequency("lcc_icl", 2000, 1) >= table.frequency("lcc_icl", 200, 1) - 1 / 50


@pytest.mark.slow
def test_overlapping_components_are_merged_more_often_by_lcc_icl():
    table = run_scenario(preset_scenario("overlap", n_replicates=50), threads=4)
    assert table.frequency("lcc_icl", 2000, 1) >= table.frequency("bic", 2000, 1)
