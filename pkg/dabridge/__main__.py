# SPDX-FileCopyrightText: 2024 dabridge contributors
# SPDX-License-Identifier: Apache-2.0

"""Allow python -m dabridge."""

import sys

from .cli import main

sys.exit(main())
