from datetime import date
from typing import Optional

from dateutil.relativedelta import relativedelta


def periodMonth(origin: date, period: int) -> date:
    """Calendar month of a 1-based period index (period 1 is the origin month)."""
    return origin + relativedelta(months=int(period) - 1)


def periodLabel(origin: Optional[date], period: int) -> Optional[str]:
    if origin is None:
        return None
    return periodMonth(origin, period).strftime('%Y-%m')
