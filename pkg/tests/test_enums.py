"""Tests for enums and enum lookup."""

from enum import Enum

import pytest

from mrfm_spincat import (
    OutputFormat,
    PlotKind,
    RunMode,
    ScheduleKind,
    SimulationEventTypes,
    SpinInitKind,
)
from mrfm_spincat.enums import parse_enum


class TestSimulationEventTypes:
    """Signal categories."""

    def test_values_start_with_signal_names(self):
        for name in ("lifecycle", "propagation", "analysis", "output"):
            assert any(m.value.startswith(name) for m in SimulationEventTypes)

    def test_unique_values(self):
        values = [m.value for m in SimulationEventTypes]
        assert len(values) == len(set(values))


class TestVocabularies:
    """The configuration vocabularies."""

    @pytest.mark.parametrize(
        ("enum_type", "values"),
        [
            (ScheduleKind, {"cai_paper", "cai_ramped", "rabi", "pi_pulse", "custom"}),
            (
                SpinInitKind,
                {"up", "down", "plus_x", "along_eff", "opposite_eff", "custom"},
            ),
            (RunMode, {"quantum", "classical", "correspondence", "sweep"}),
            (PlotKind, {"density_panels", "trajectory", "decomposition"}),
        ],
    )
    def test_values(self, enum_type, values):
        assert {m.value for m in enum_type} == values

    def test_plot_kinds_are_output_formats(self):
        formats = {m.value for m in OutputFormat}
        assert {m.value for m in PlotKind} <= formats


class TestParseEnum:
    """Tests for case-insensitive lookup by value or name."""

    @pytest.mark.parametrize("text", ["custom", "CUSTOM", "Custom_Piecewise", " custom "])
    def test_value_or_name(self, text):
        assert parse_enum(ScheduleKind, text) is ScheduleKind.CUSTOM_PIECEWISE

    def test_member_passes_through(self):
        assert parse_enum(RunMode, RunMode.SWEEP) is RunMode.SWEEP

    def test_unknown_lists_accepted_values(self):
        with pytest.raises(ValueError, match="quantum, classical, correspondence, sweep"):
            parse_enum(RunMode, "batch")

    def test_any_enum(self, sample_enum):
        assert parse_enum(sample_enum, "processing_event") is sample_enum.PROCESSING_EVENT
        assert issubclass(sample_enum, Enum)
