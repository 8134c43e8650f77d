"""
Plaintext Billing Oracle

Reference implementation of the billing rules over plaintext volumes, used
for differential testing of the encrypted pipeline and by the `oracle` CLI
subcommand.

Rounding policies for the surplus share of prosumers:
- "nearest": same rounded per-Wh scalar as the encrypted pipeline
- "exact":   fractions.Fraction, conservation holds with zero residual
"""

import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Sequence

import numpy as np
import pandas as pd

from src.market.market_model import CycleInput, PriceSchedule, Role, UserId, profiles_to_frame

from .billing import BillingMode, TotalDeviations, prosumer_revenue_pool, round_half_away, supplier_balance

logger = logging.getLogger(__name__)

ROUNDING_POLICIES = ("nearest", "exact")


@dataclass
class OracleResult:
    """Plaintext billing outcome of a whole period"""

    cycles: pd.DataFrame
    statements: pd.DataFrame
    finals: pd.DataFrame
    supplier_balance_tot: int

    def final_amounts(self) -> Dict[UserId, object]:
        return {
            UserId(Role[row.user_role], int(row.user_ordinal)): row.final_amount
            for row in self.finals.itertuples(index=False)
        }

    def final_lines(self) -> List[str]:
        """Same canonical lines as the settlement's final report"""
        lines = [f"{row.user_role},{row.user_ordinal},{row.final_amount}" for row in self.finals.itertuples(index=False)]
        lines.append(f"SUPPLIER,balance,{self.supplier_balance_tot}")
        return lines

    def conservation_residuals(self) -> pd.Series:
        """Per-cycle sum(consumer) - sum(prosumer) - supplier balance"""
        signed = self.statements.assign(
            signed=np.where(self.statements["user_role"] == Role.CONSUMER.name, 1, -1) * self.statements["statement"]
        )
        flows = signed.groupby("cycle")["signed"].agg(lambda values: sum(values, 0))
        return flows - self.cycles.set_index("cycle")["supplier_balance"]


class BillingOracle:
    """Compute statements, totals and balances without encryption"""

    def __init__(self, prices: PriceSchedule, rounding: str = "nearest"):
        if rounding not in ROUNDING_POLICIES:
            raise ValueError(f"Unknown rounding policy '{rounding}'")
        self.prices = prices
        self.rounding = rounding

    def cycle_summary(self, frame: pd.DataFrame) -> pd.DataFrame:
        """
        Per-cycle totals, mode, revenue pool, surplus share and supplier balance

        Args:
            frame: Profile frame (see profiles_to_frame) with a `deviation` column

        Returns:
            DataFrame indexed by position with one row per cycle
        """
        totals = (
            frame.pivot_table(index="cycle", columns="user_role", values="deviation", aggfunc="sum", fill_value=0)
            .reindex(columns=[Role.CONSUMER.name, Role.PROSUMER.name], fill_value=0)
            .rename(columns={Role.CONSUMER.name: "dev_c_tot", Role.PROSUMER.name: "dev_p_tot"})
            .reset_index()
        )

        records = []
        for row in totals.itertuples(index=False):
            dev_c, dev_p = int(row.dev_c_tot), int(row.dev_p_tot)
            deviations = TotalDeviations(dev_c, dev_p)
            mode = deviations.mode
            pool = prosumer_revenue_pool(deviations, self.prices)

            share = 0
            if mode is BillingMode.SURPLUS and dev_p != 0:
                share = round_half_away(pool, dev_p) if self.rounding == "nearest" else Fraction(pool, dev_p)

            records.append({
                "cycle": int(row.cycle),
                "dev_c_tot": dev_c,
                "dev_p_tot": dev_p,
                "mode": mode.value,
                "tot_rev_p": pool,
                "surplus_share": share,
                "degenerate": mode is BillingMode.SURPLUS and dev_p == 0,
                "supplier_balance": supplier_balance(dev_c, dev_p, self.prices),
            })
        return pd.DataFrame(records)

    def run(self, inputs: Sequence[CycleInput]) -> OracleResult:
        frame = profiles_to_frame(inputs)
        frame["deviation"] = frame["real_wh"] - frame["committed_wh"]
        cycles = self.cycle_summary(frame)

        merged = frame.merge(cycles[["cycle", "mode", "surplus_share", "degenerate"]], on="cycle")
        is_consumer = merged["user_role"] == Role.CONSUMER.name

        rate = pd.Series(
            np.select(
                [merged["mode"] == BillingMode.DEFICIT.value, is_consumer | (merged["mode"] == BillingMode.BALANCED.value)],
                [self.prices.pi_rt, self.prices.pi_p2p],
                default=0,
            ),
            index=merged.index,
            dtype=object,
        )
        surplus_prosumer = (merged["mode"] == BillingMode.SURPLUS.value) & ~is_consumer
        rate[surplus_prosumer & ~merged["degenerate"]] = merged.loc[surplus_prosumer & ~merged["degenerate"], "surplus_share"]

        statements = merged.assign(
            statement=[
                int(c) * self.prices.pi_p2p + int(d) * (r if isinstance(r, Fraction) else int(r))
                for c, d, r in zip(merged["committed_wh"], merged["deviation"], rate)
            ]
        )[["cycle", "user_role", "user_ordinal", "committed_wh", "deviation", "statement"]]

        finals = (
            statements.groupby(["user_role", "user_ordinal"], sort=True)["statement"]
            .agg(lambda values: sum(values, 0))
            .rename("final_amount")
            .reset_index()
        )
        balance_tot = int(cycles["supplier_balance"].sum())

        logger.info(f"Oracle billed {len(finals)} users over {len(cycles)} cycles ({self.rounding} rounding)")
        return OracleResult(cycles=cycles, statements=statements, finals=finals, supplier_balance_tot=balance_tot)
