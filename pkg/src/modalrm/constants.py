"""Physical constants and unit conventions."""

MU_EARTH = 398600.4418  # km^3/s^2
R_EARTH = 6378.137  # km, equatorial
J2_EARTH = 1.082626e-3

# Earth-Moon CR3BP
MU_EARTH_MOON = 0.012150585609624
LU_EARTH_MOON = 384400.0  # km
TU_EARTH_MOON = 375190.26  # s

SECONDS_PER_DAY = 86400.0

# scale factor used for CR3BP relative-motion tables
ALPHA_CR3BP = 5.2e-6


def days_to_tu(days: float, tu: float = TU_EARTH_MOON) -> float:
    return days * SECONDS_PER_DAY / tu


def tu_to_days(tau: float, tu: float = TU_EARTH_MOON) -> float:
    return tau * tu / SECONDS_PER_DAY
