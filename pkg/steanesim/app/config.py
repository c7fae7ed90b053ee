from __future__ import annotations

import json
import math
from typing import List, Tuple

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_file=".env", env_prefix="STEANESIM_", extra="ignore")

    # Expansion engine
    DEFAULT_ORDER: int = 2
    ALLOW_ORDER_3: bool = False
    STRATEGY: str = "propagate"
    JOBS: int = 1
    BRANCH_THRESHOLD: float = 1e-14
    MERGE_DECIMALS: int = 10

    # Gadget reconstruction switches
    SHOR_VERIFICATIONS: int = 1
    THETA_ROUNDS: int = 2
    LOGICAL_ZERO_MODE: str = "correct"
    T_MEASUREMENT_MODE: str = "postselect"

    # Reporting
    SNAP_TOLERANCE: float = 1e-9
    DIFF_TOLERANCE: float = 1e-6
    MONTE_CARLO_SAMPLES: int = 1_000_000
    LOG_LEVEL: str = "INFO"

    # HTTP surface
    MAX_REPORT_SIZE: int = 10 * 1024 * 1024  # 10MB per uploaded report

    # keep these as STRINGS so pydantic doesn't json.loads them automatically
    ALLOWED_ORIGINS: str = "*"
    PRESET_ANGLES: str = "0.3927,0.7854"

    @property
    def allowed_origins_list(self) -> List[str]:
        """
        Safe parsing:
        - supports: "http://a,http://b"
        - supports: '["http://a","http://b"]'
        - supports: empty -> ["*"]
        """
        v = (self.ALLOWED_ORIGINS or "").strip()
        if not v:
            return ["*"]

        if v.startswith("["):
            try:
                data = json.loads(v)
                if isinstance(data, list):
                    return [str(x).strip() for x in data if str(x).strip()]
            except json.JSONDecodeError:
                pass

        return [x.strip() for x in v.split(",") if x.strip()]

    @property
    def preset_angles_list(self) -> List[Tuple[float, float]]:
        """
        "a,b" or "a,b;c,d" or '[[a,b],[c,d]]' -> [(a, b), ...], radians.
        Falls back to a single generic point so state-dependent terms stay visible.
        """
        v = (self.PRESET_ANGLES or "").strip()
        fallback = [(math.pi / 8, math.pi / 4)]
        if not v:
            return fallback

        if v.startswith("["):
            try:
                data = json.loads(v)
                return [(float(a), float(b)) for a, b in data]
            except (json.JSONDecodeError, TypeError, ValueError):
                return fallback

        pairs = []
        for chunk in v.split(";"):
            parts = [x.strip() for x in chunk.split(",") if x.strip()]
            if len(parts) == 2:
                pairs.append((float(parts[0]), float(parts[1])))
        return pairs or fallback


settings = Settings()
