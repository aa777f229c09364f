# SPDX-FileCopyrightText: 2024 dabridge contributors
# SPDX-License-Identifier: Apache-2.0

"""Shim so that `pip install .` works with the setup.cfg metadata."""

from setuptools import setup

setup()
