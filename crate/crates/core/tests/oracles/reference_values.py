"""High-precision reference values frozen into the Rust test suite.

Run with `python3 reference_values.py`; the printed literals are pasted into
the corresponding tests. Uses mpmath at 50 significant digits.
"""
import mpmath as mp

mp.mp.dps = 50


def eyring(dims, t60):
    lx, ly, lz = [mp.mpf(d) for d in dims]
    v = lx * ly * lz
    s = 2 * (lx * ly + lx * lz + ly * lz)
    alpha = 1 - mp.exp(-mp.mpf("0.161") * v / (s * mp.mpf(t60)))
    return alpha, mp.sqrt(1 - alpha)


def softmax(z, t):
    e = [mp.exp(mp.mpf(x) / mp.mpf(t)) for x in z]
    s = mp.fsum(e)
    return [x / s for x in e]


def topk(z, k, t):
    order = sorted(range(len(z)), key=lambda i: (-mp.mpf(z[i]), i))[:k]
    e = {i: mp.exp(mp.mpf(z[i]) / mp.mpf(t)) for i in range(len(z))}
    sk = mp.fsum(e[i] for i in order)
    full = mp.fsum(e.values())
    q = [e[i] / sk if i in order else mp.mpf(0) for i in range(len(z))]
    return q, full / sk


print("eyring (4,4,3) t60=0.5:", [mp.nstr(x, 20) for x in eyring((4, 4, 3), "0.5")])
print("mel(700):", mp.nstr(2595 * mp.log10(2), 20))
q, a = topk(["3", "1", "2"], 2, 1)
print("topk (3,1,2) k=2 T=1:", [mp.nstr(x, 20) for x in q], mp.nstr(a, 20))

softmax_cases = [
    ["0.75", "-1.25", "3.5", "2.0", "-0.5", "1.125", "0.0", "-3.75"],
    ["10.0", "9.5", "-20.0", "4.25", "4.25"],
]
for z in softmax_cases:
    print("softmax T=2", z, [mp.nstr(x, 20) for x in softmax(z, 2)])
