"""Offline weight conversion and golden-fixture generation.

This package produces the FDNW weight files and differential-test fixtures
consumed by the facekit engine. It deliberately does not import facekit:
the FDNW format and the fixture layout are the only shared contract, so
the two implementations stay independent.
"""
