"""Deterministic TPC-H-style data generator for desk-scale experiments.

Scale factor 1 corresponds to the conventional sizes (150K customers, 1.5M
orders, ~6M lineitems, 200K parts); tests run at SF <= 0.1. Keys are dense
1..N integers so primary keys sit in a contiguous range.
"""

from __future__ import annotations

import os
import random

from . import catalog as cat

SEGMENTS = ["AUTOMOBILE", "BUILDING", "FURNITURE", "MACHINERY", "HOUSEHOLD"]
PRIORITIES = ["1-URGENT", "2-HIGH", "3-MEDIUM", "4-NOT SPECIFIED", "5-LOW"]
SHIPMODES = ["REG AIR", "AIR", "RAIL", "SHIP", "TRUCK", "MAIL", "FOB"]
INSTRUCTS = ["DELIVER IN PERSON", "COLLECT COD", "NONE", "TAKE BACK RETURN"]
TYPES_1 = ["STANDARD", "SMALL", "MEDIUM", "LARGE", "ECONOMY", "PROMO"]
TYPES_2 = ["ANODIZED", "BURNISHED", "PLATED", "POLISHED", "BRUSHED"]
TYPES_3 = ["TIN", "NICKEL", "BRASS", "STEEL", "COPPER"]
CONTAINERS_1 = ["SM", "MED", "LG", "JUMBO", "WRAP"]
CONTAINERS_2 = ["CASE", "BOX", "BAG", "PKG", "PACK"]
NAME_WORDS = ["almond", "antique", "aquamarine", "azure", "beige", "bisque",
              "black", "blanched", "blue", "blush", "brown", "burlywood",
              "burnished", "chartreuse", "chiffon", "chocolate", "coral",
              "cornflower"]
COMMENT_WORDS = ["carefully", "quickly", "furiously", "slyly", "blithely",
                 "deposits", "packages", "accounts", "requests", "special",
                 "pending", "final", "ironic", "regular", "bold", "express",
                 "instructions", "theodolites", "foxes", "pinto", "beans",
                 "sleep", "nag", "haggle", "wake", "cajole"]

DATE_LO = cat.days_from_civil(1992, 1, 1)
DATE_HI = cat.days_from_civil(1998, 12, 31)


def _comment(rng, lo=3, hi=8):
    n = rng.randint(lo, hi)
    return " ".join(rng.choice(COMMENT_WORDS) for _ in range(n))


def _money(rng, lo, hi):
    return rng.randint(int(lo * 100), int(hi * 100)) / 100.0


def sizes_for_scale(scale):
    return {
        "part": max(int(round(200_000 * scale)), 1),
        "customer": max(int(round(150_000 * scale)), 1),
        "orders": max(int(round(1_500_000 * scale)), 1),
    }


def generate(out_dir, scale=0.01, seed=704):
    """Write part.tbl, customer.tbl, orders.tbl, lineitem.tbl into out_dir."""
    os.makedirs(out_dir, exist_ok=True)
    sizes = sizes_for_scale(scale)
    rng = random.Random(seed)

    with open(os.path.join(out_dir, "part.tbl"), "w") as fh:
        for pk in range(1, sizes["part"] + 1):
            name = " ".join(rng.sample(NAME_WORDS, 3))
            brand = f"Brand#{rng.randint(1, 5)}{rng.randint(1, 5)}"
            ptype = (f"{rng.choice(TYPES_1)} {rng.choice(TYPES_2)} "
                     f"{rng.choice(TYPES_3)}")
            size = rng.randint(1, 50)
            container = f"{rng.choice(CONTAINERS_1)} {rng.choice(CONTAINERS_2)}"
            price = _money(rng, 900, 2000)
            fh.write(f"{pk}|{name}|{brand}|{ptype}|{size}|{container}|"
                     f"{price:.2f}|\n")

    with open(os.path.join(out_dir, "customer.tbl"), "w") as fh:
        for ck in range(1, sizes["customer"] + 1):
            seg = rng.choice(SEGMENTS)
            nation = rng.randint(0, 24)
            bal = _money(rng, -999, 9999)
            fh.write(f"{ck}|Customer#{ck:09d}|{seg}|{nation}|{bal:.2f}|\n")

    order_dates = {}
    with open(os.path.join(out_dir, "orders.tbl"), "w") as fh:
        for ok in range(1, sizes["orders"] + 1):
            ck = rng.randint(1, sizes["customer"])
            status = rng.choice("FOP")
            total = _money(rng, 850, 10000)
            odate = rng.randint(DATE_LO, DATE_HI - 151)
            order_dates[ok] = odate
            prio = rng.choice(PRIORITIES)
            fh.write(f"{ok}|{ck}|{status}|{total:.2f}|"
                     f"{cat.format_date(odate)}|{prio}|0|{_comment(rng)}|\n")

    with open(os.path.join(out_dir, "lineitem.tbl"), "w") as fh:
        for ok in range(1, sizes["orders"] + 1):
            odate = order_dates[ok]
            for ln in range(1, rng.randint(1, 7) + 1):
                pk = rng.randint(1, sizes["part"])
                qty = float(rng.randint(1, 50))
                price = round(qty * _money(rng, 9, 21), 2)
                disc = rng.randint(0, 10) / 100.0
                tax = rng.randint(0, 8) / 100.0
                rflag = rng.choice("RAN")
                lstatus = rng.choice("OF")
                ship = odate + rng.randint(1, 121)
                commit = odate + rng.randint(30, 90)
                receipt = ship + rng.randint(1, 30)
                mode = rng.choice(SHIPMODES)
                instr = rng.choice(INSTRUCTS)
                fh.write(f"{ok}|{pk}|{ln}|{qty:.2f}|{price:.2f}|{disc:.2f}|"
                         f"{tax:.2f}|{rflag}|{lstatus}|{cat.format_date(ship)}|"
                         f"{cat.format_date(commit)}|{cat.format_date(receipt)}|"
                         f"{instr}|{mode}|{_comment(rng)}|\n")


def generate_empty(out_dir):
    os.makedirs(out_dir, exist_ok=True)
    for name in ("part", "customer", "orders", "lineitem"):
        open(os.path.join(out_dir, name + ".tbl"), "w").close()
