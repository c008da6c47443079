"""Tests for the mrfm_spincat package."""
