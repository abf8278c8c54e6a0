"""Marks the converter test dir as a package so its conftest does not shadow the engine suite's."""
