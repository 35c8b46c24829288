"""Regenerate the bundled CDF fixtures (run from the repo root).

Writes ieee14.cdf and ieee30.cdf with proper fixed-column layout from the
standard archive values (100 MVA base), plus the tiny two-bus hand case.
"""
import os

HERE = os.path.dirname(os.path.abspath(__file__))

# (id, type, Vm, Pd, Qd, Pg, Qg, Gs, Bs) -- MW/MVAR, shunts in per-unit
IEEE14_BUSES = [
    (1, 3, 1.060, 0.0, 0.0, 232.4, -16.9, 0.0, 0.0),
    (2, 2, 1.045, 21.7, 12.7, 40.0, 42.4, 0.0, 0.0),
    (3, 2, 1.010, 94.2, 19.0, 0.0, 23.4, 0.0, 0.0),
    (4, 0, 1.019, 47.8, -3.9, 0.0, 0.0, 0.0, 0.0),
    (5, 0, 1.020, 7.6, 1.6, 0.0, 0.0, 0.0, 0.0),
    (6, 2, 1.070, 11.2, 7.5, 0.0, 12.2, 0.0, 0.0),
    (7, 0, 1.062, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0),
    (8, 2, 1.090, 0.0, 0.0, 0.0, 17.4, 0.0, 0.0),
    (9, 0, 1.056, 29.5, 16.6, 0.0, 0.0, 0.0, 0.19),
    (10, 0, 1.051, 9.0, 5.8, 0.0, 0.0, 0.0, 0.0),
    (11, 0, 1.057, 3.5, 1.8, 0.0, 0.0, 0.0, 0.0),
    (12, 0, 1.055, 6.1, 1.6, 0.0, 0.0, 0.0, 0.0),
    (13, 0, 1.050, 13.5, 5.8, 0.0, 0.0, 0.0, 0.0),
    (14, 0, 1.036, 14.9, 5.0, 0.0, 0.0, 0.0, 0.0),
]

# (from, to, r, x, b, tap)
IEEE14_BRANCHES = [
    (1, 2, 0.01938, 0.05917, 0.0528, 0.0),
    (1, 5, 0.05403, 0.22304, 0.0492, 0.0),
    (2, 3, 0.04699, 0.19797, 0.0438, 0.0),
    (2, 4, 0.05811, 0.17632, 0.0340, 0.0),
    (2, 5, 0.05695, 0.17388, 0.0346, 0.0),
    (3, 4, 0.06701, 0.17103, 0.0128, 0.0),
    (4, 5, 0.01335, 0.04211, 0.0000, 0.0),
    (4, 7, 0.00000, 0.20912, 0.0000, 0.978),
    (4, 9, 0.00000, 0.55618, 0.0000, 0.969),
    (5, 6, 0.00000, 0.25202, 0.0000, 0.932),
    (6, 11, 0.09498, 0.19890, 0.0000, 0.0),
    (6, 12, 0.12291, 0.25581, 0.0000, 0.0),
    (6, 13, 0.06615, 0.13027, 0.0000, 0.0),
    (7, 8, 0.00000, 0.17615, 0.0000, 0.0),
    (7, 9, 0.00000, 0.11001, 0.0000, 0.0),
    (9, 10, 0.03181, 0.08450, 0.0000, 0.0),
    (9, 14, 0.12711, 0.27038, 0.0000, 0.0),
    (10, 11, 0.08205, 0.19207, 0.0000, 0.0),
    (12, 13, 0.22092, 0.19988, 0.0000, 0.0),
    (13, 14, 0.17093, 0.34802, 0.0000, 0.0),
]

IEEE30_BUSES = [
    (1, 3, 1.060, 0.0, 0.0, 260.2, 0.0, 0.0, 0.0),
    (2, 2, 1.043, 21.7, 12.7, 40.0, 0.0, 0.0, 0.0),
    (3, 0, 1.000, 2.4, 1.2, 0.0, 0.0, 0.0, 0.0),
    (4, 0, 1.000, 7.6, 1.6, 0.0, 0.0, 0.0, 0.0),
    (5, 2, 1.010, 94.2, 19.0, 0.0, 0.0, 0.0, 0.0),
    (6, 0, 1.000, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0),
    (7, 0, 1.000, 22.8, 10.9, 0.0, 0.0, 0.0, 0.0),
    (8, 2, 1.010, 30.0, 30.0, 0.0, 0.0, 0.0, 0.0),
    (9, 0, 1.000, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0),
    (10, 0, 1.000, 5.8, 2.0, 0.0, 0.0, 0.0, 0.19),
    (11, 2, 1.082, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0),
    (12, 0, 1.000, 11.2, 7.5, 0.0, 0.0, 0.0, 0.0),
    (13, 2, 1.071, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0),
    (14, 0, 1.000, 6.2, 1.6, 0.0, 0.0, 0.0, 0.0),
    (15, 0, 1.000, 8.2, 2.5, 0.0, 0.0, 0.0, 0.0),
    (16, 0, 1.000, 3.5, 1.8, 0.0, 0.0, 0.0, 0.0),
    (17, 0, 1.000, 9.0, 5.8, 0.0, 0.0, 0.0, 0.0),
    (18, 0, 1.000, 3.2, 0.9, 0.0, 0.0, 0.0, 0.0),
    (19, 0, 1.000, 9.5, 3.4, 0.0, 0.0, 0.0, 0.0),
    (20, 0, 1.000, 2.2, 0.7, 0.0, 0.0, 0.0, 0.0),
    (21, 0, 1.000, 17.5, 11.2, 0.0, 0.0, 0.0, 0.0),
    (22, 0, 1.000, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0),
    (23, 0, 1.000, 3.2, 1.6, 0.0, 0.0, 0.0, 0.0),
    (24, 0, 1.000, 8.7, 6.7, 0.0, 0.0, 0.0, 0.043),
    (25, 0, 1.000, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0),
    (26, 0, 1.000, 3.5, 2.3, 0.0, 0.0, 0.0, 0.0),
    (27, 0, 1.000, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0),
    (28, 0, 1.000, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0),
    (29, 0, 1.000, 2.4, 0.9, 0.0, 0.0, 0.0, 0.0),
    (30, 0, 1.000, 10.6, 1.9, 0.0, 0.0, 0.0, 0.0),
]

IEEE30_BRANCHES = [
    (1, 2, 0.0192, 0.0575, 0.0528, 0.0),
    (1, 3, 0.0452, 0.1652, 0.0408, 0.0),
    (2, 4, 0.0570, 0.1737, 0.0368, 0.0),
    (3, 4, 0.0132, 0.0379, 0.0084, 0.0),
    (2, 5, 0.0472, 0.1983, 0.0418, 0.0),
    (2, 6, 0.0581, 0.1763, 0.0374, 0.0),
    (4, 6, 0.0119, 0.0414, 0.0090, 0.0),
    (5, 7, 0.0460, 0.1160, 0.0204, 0.0),
    (6, 7, 0.0267, 0.0820, 0.0170, 0.0),
    (6, 8, 0.0120, 0.0420, 0.0090, 0.0),
    (6, 9, 0.0, 0.2080, 0.0, 0.978),
    (6, 10, 0.0, 0.5560, 0.0, 0.969),
    (9, 11, 0.0, 0.2080, 0.0, 0.0),
    (9, 10, 0.0, 0.1100, 0.0, 0.0),
    (4, 12, 0.0, 0.2560, 0.0, 0.932),
    (12, 13, 0.0, 0.1400, 0.0, 0.0),
    (12, 14, 0.1231, 0.2559, 0.0, 0.0),
    (12, 15, 0.0662, 0.1304, 0.0, 0.0),
    (12, 16, 0.0945, 0.1987, 0.0, 0.0),
    (14, 15, 0.2210, 0.1997, 0.0, 0.0),
    (16, 17, 0.0824, 0.1923, 0.0, 0.0),
    (15, 18, 0.1070, 0.2185, 0.0, 0.0),
    (18, 19, 0.0639, 0.1292, 0.0, 0.0),
    (19, 20, 0.0340, 0.0680, 0.0, 0.0),
    (10, 20, 0.0936, 0.2090, 0.0, 0.0),
    (10, 17, 0.0324, 0.0845, 0.0, 0.0),
    (10, 21, 0.0348, 0.0749, 0.0, 0.0),
    (10, 22, 0.0727, 0.1499, 0.0, 0.0),
    (21, 22, 0.0116, 0.0236, 0.0, 0.0),
    (15, 23, 0.1000, 0.2020, 0.0, 0.0),
    (22, 24, 0.1150, 0.1790, 0.0, 0.0),
    (23, 24, 0.1320, 0.2700, 0.0, 0.0),
    (24, 25, 0.1885, 0.3292, 0.0, 0.0),
    (25, 26, 0.2544, 0.3800, 0.0, 0.0),
    (25, 27, 0.1093, 0.2087, 0.0, 0.0),
    (28, 27, 0.0, 0.3960, 0.0, 0.968),
    (27, 29, 0.2198, 0.4153, 0.0, 0.0),
    (27, 30, 0.3202, 0.6027, 0.0, 0.0),
    (29, 30, 0.2399, 0.4533, 0.0, 0.0),
    (8, 28, 0.0636, 0.2000, 0.0428, 0.0),
    (6, 28, 0.0169, 0.0599, 0.0130, 0.0),
]


def bus_line(bid, btype, vm, pd, qd, pg, qg, gs, bs):
    line = [" "] * 127
    def put(lo, hi, text):
        s = str(text)[: hi - lo + 1].rjust(hi - lo + 1)
        line[lo - 1:hi] = list(s)
    put(1, 4, bid)
    put(7, 17, f"BUS {bid}".ljust(11))
    put(19, 20, 1)
    put(21, 23, 1)
    put(25, 26, btype)
    put(28, 33, f"{vm:.4f}")
    put(34, 40, f"{0.0:.2f}")
    put(41, 49, f"{pd:.2f}")
    put(50, 59, f"{qd:.2f}")
    put(60, 67, f"{pg:.2f}")
    put(68, 75, f"{qg:.2f}")
    put(77, 83, f"{0.0:.1f}")
    put(85, 90, f"{vm:.4f}")
    put(91, 98, f"{0.0:.1f}")
    put(99, 106, f"{0.0:.1f}")
    put(107, 114, f"{gs:.4f}")
    put(115, 122, f"{bs:.4f}")
    put(124, 127, 0)
    return "".join(line).rstrip()


def branch_line(fb, tb, r, x, b, tap):
    line = [" "] * 126
    def put(lo, hi, text):
        s = str(text)[: hi - lo + 1].rjust(hi - lo + 1)
        line[lo - 1:hi] = list(s)
    put(1, 4, fb)
    put(6, 9, tb)
    put(11, 12, 1)
    put(13, 14, 1)
    put(17, 17, 1)
    put(19, 19, 0 if tap == 0.0 else 1)
    put(20, 29, f"{r:.5f}")
    put(30, 40, f"{x:.5f}")
    put(41, 50, f"{b:.5f}")
    put(51, 55, 0)
    put(57, 61, 0)
    put(63, 67, 0)
    put(69, 72, 0)
    put(74, 74, 0)
    put(77, 82, f"{tap:.3f}" if tap else "0.0")
    put(84, 90, f"{0.0:.2f}")
    return "".join(line).rstrip()


def write_case(path, title, buses, branches, base=100.0):
    out = []
    header = [" "] * 73
    def put(lo, hi, text):
        s = str(text)[: hi - lo + 1].rjust(hi - lo + 1)
        header[lo - 1:hi] = list(s)
    put(2, 9, "08/09/26")
    put(11, 30, "SSBGEO FIXTURES".ljust(20))
    put(32, 37, f"{base:.1f}")
    put(39, 42, 2026)
    put(44, 44, "S")
    put(46, 73, title.ljust(28))
    out.append("".join(header).rstrip())
    out.append(f"BUS DATA FOLLOWS                            {len(buses)} ITEMS")
    out.extend(bus_line(*b) for b in buses)
    out.append("-999")
    out.append(f"BRANCH DATA FOLLOWS                         {len(branches)} ITEMS")
    out.extend(branch_line(*br) for br in branches)
    out.append("-999")
    out.append("END OF DATA")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")


TWOBUS_BUSES = [
    (1, 3, 1.05, 0.0, 0.0, 50.0, 10.0, 0.0, 0.0),
    (2, 0, 1.00, 40.0, 15.0, 0.0, 0.0, 0.0, 0.0),
]
TWOBUS_BRANCHES = [(1, 2, 0.01, 0.1, 0.0, 0.0)]


if __name__ == "__main__":
    write_case(os.path.join(HERE, "ieee14.cdf"), "IEEE 14 BUS TEST CASE",
               IEEE14_BUSES, IEEE14_BRANCHES)
    write_case(os.path.join(HERE, "ieee30.cdf"), "IEEE 30 BUS TEST CASE",
               IEEE30_BUSES, IEEE30_BRANCHES)
    write_case(os.path.join(HERE, "twobus.cdf"), "TWO BUS HAND CASE",
               TWOBUS_BUSES, TWOBUS_BRANCHES)
    print("fixtures written")
