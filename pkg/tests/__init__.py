"""Tests for Granular Stereo."""
