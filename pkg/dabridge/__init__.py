# SPDX-License-Identifier: Apache-2.0
# SPDX-FileCopyrightText: 2024 dabridge contributors
##############################################################################
# COPYRIGHT 2024 dabridge contributors
#
# All rights reserved. This program and the accompanying materials
# are made available under the terms of the Apache 2.0 License
# which accompanies this distribution, and is available at
# https://www.apache.org/licenses/LICENSE-2.0
##############################################################################
"""Deterministic Brownian-bridge translation with dual approximators."""

from .const import VERSION

__version__ = VERSION
