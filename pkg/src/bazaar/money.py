"""Money in integer micro-units.

All charging arithmetic happens on ints (1 currency unit = 1_000_000
micro). Floats never touch an amount; JSON inputs are routed through
Decimal so "0.01" means exactly one cent.
"""

from decimal import Decimal, ROUND_HALF_EVEN

MICRO = 1_000_000


def to_micro(amount) -> int:
    """Parse a currency amount (str, int, float or Decimal) into micro-units.

    Floats are accepted for convenience but go through their shortest
    decimal repr, so 0.01 becomes exactly 10000 micro.
    """
    if isinstance(amount, bool):
        raise ValueError("bool is not an amount")
    if isinstance(amount, int):
        dec = Decimal(amount)
    elif isinstance(amount, Decimal):
        dec = amount
    else:
        dec = Decimal(str(amount))
    micro = (dec * MICRO).to_integral_value(rounding=ROUND_HALF_EVEN)
    return int(micro)


def from_micro(micro: int) -> Decimal:
    return Decimal(micro) / MICRO


def format_micro(micro: int) -> str:
    """Human display with at least two decimals: 2_500_000 -> '2.50'."""
    dec = from_micro(micro).quantize(Decimal("0.000001"))
    text = format(dec, "f")
    whole, frac = text.split(".")
    frac = frac.rstrip("0")
    if len(frac) < 2:
        frac = frac.ljust(2, "0")
    return f"{whole}.{frac}"


def multiply_micro(micro: int, fraction) -> int:
    """micro * fraction with decimal-exact half-even rounding to micro."""
    frac = fraction if isinstance(fraction, Decimal) else Decimal(str(fraction))
    return int((Decimal(micro) * frac).to_integral_value(rounding=ROUND_HALF_EVEN))
