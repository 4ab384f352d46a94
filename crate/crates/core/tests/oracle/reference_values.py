"""High-precision reference values frozen into the Rust test suites.

Run with `python3 reference_values.py`. Uses mpmath at 50 digits and does not
share any code path with the Rust implementation.
"""
from mpmath import mp, mpf, sqrt, log, exp, binomial

mp.dps = 50


def gauss_eps(sens, sigma, dl):
    return sens / sigma * sqrt(2 * log(mpf("1.25") / dl))


def beta(dp, k):
    return sqrt(mpf("0.5") * log(2 / dp)) / sqrt(k)


def c_const(L, smin, dl):
    return 2 * L / smin * sqrt(2 * log(mpf("1.25") / dl))


def central_uniform(p, k, c, dp, dl):
    b = beta(dp, k)
    eps = log(1 + p / (1 - dp) * (exp(c / sqrt(k * (p - b))) - 1))
    delta = dp + p * dl / (1 - dp)
    return eps, delta


def compose_het(eps_list, dt):
    s = sum((exp(e) - 1) * e / (exp(e) + 1) for e in eps_list)
    return s + sqrt(2 * log(1 / dt) * sum(e * e for e in eps_list))


def compose_hom(e, t, dt):
    return sqrt(2 * t * log(1 / dt)) * e + t * e * (exp(e) - 1)


def pmf_uniform(k, p):
    return [binomial(k, j) * p**j * (1 - p) ** (k - j) for j in range(k + 1)]


def inv_moments(pmf):
    m1 = sum(pmf[j] / j for j in range(1, len(pmf)))
    m2 = sum(pmf[j] / j**2 for j in range(1, len(pmf)))
    return m1, m2


def main():
    print("gauss(1,1,0.05)", gauss_eps(1, 1, mpf("0.05")))
    print("beta(1e-5,200)", beta(mpf("1e-5"), 200))
    print("hoeffding(0.17468,200)", 2 * exp(-2 * mpf("0.17468") ** 2 * 200))
    print("pstar(200,1e-5)", 2 * beta(mpf("1e-5"), 200))
    print("pstar(1e4,1e-4)", 2 * beta(mpf("1e-4"), 10**4))

    # local epsilon, N0-inclusive and literal
    dl = mpf("1e-5")
    for s2, L, p in [("0.1", 1, "0.9"), ("0.1", 1, "0.3"), ("0.1", "0.1", "0.9"),
                     ("0.1", "0.1", "0.3"), ("0.8", 1, "0.9"), ("0.8", 1, "0.3"),
                     ("0.8", "0.2", "0.9"), ("0.8", "0.2", "0.3")]:
        s2, L, p = mpf(s2), mpf(L), mpf(p)
        kappa = 199 * p - beta(dl, 200) * 200
        e = 2 * L * sqrt(2 * log(mpf("1.25") / dl)) / sqrt((1 + kappa) * s2 + 1)
        print("local_n0", s2, L, p, "kappa", kappa, "eps", e)
    kappa = 199 * mpf("0.9") - beta(dl, 200) * 200
    print("local_literal", 2 / sqrt(mpf("0.1")) * sqrt(2 * log(mpf("1.25") / dl)) / sqrt(1 + kappa))

    # central nonuniform example
    c = c_const(1, sqrt(mpf("0.1")), dl)
    print("c(sigma^2=0.1)", c)
    print("central K=200 p=0.3", central_uniform(mpf("0.3"), 200, c, dl, dl))

    # sweep preset parameters
    d4 = mpf("1e-4")
    c2 = c_const(1, 3, d4)
    print("c fig2", c2)
    for k in [10**4, 10**6]:
        p = 2 * beta(d4, k)
        print("central fig2 K", k, central_uniform(p, k, c2, d4, d4))
        print("  wireless p=1 (Cor1)", central_uniform(1, k, c2, d4, d4)[0], "c/sqrtK", c2 / sqrt(k))
        print("  orth sampling", log(1 + p * (exp(c2) - 1)))

    # composition
    dt = mpf("1e-5")
    print("compose_het 0.1x100", compose_het([mpf("0.1")] * 100, dt))
    print("compose_hom 0.1 T=100", compose_hom(mpf("0.1"), 100, dt))
    print("compose_hom 0.1 T=1", compose_hom(mpf("0.1"), 1, dt))

    # homogeneous composition, uniform p=0.3, K=200, T=10, sweep noise params
    k, t, p = 200, 10, mpf("0.3")
    b = beta(d4, k)
    x = exp(c2 / sqrt(k * p - b * k)) - 1
    sp2 = t * p * p
    upper = x**2 * sp2 / (2 * (1 - d4) ** 2) + sqrt(2 * log(1 / dt)) * x * sqrt(sp2) / (1 - d4)
    exact = compose_het([central_uniform(p, k, c2, d4, d4)[0]] * t, dt)
    print("relaxed upper", upper, "exact", exact)

    # inverse moments
    print("invmom uniform p=0.5 K=10", inv_moments(pmf_uniform(10, mpf("0.5"))))
    print("invmom uniform p=0.5 K=200", inv_moments(pmf_uniform(200, mpf("0.5"))))

    # convergence bounds, training preset parameters
    lam, smooth, L, d, s2, n0, T = mpf("0.2"), mpf("0.9"), 2, 30, mpf("0.1"), 1, 4000
    for K, p in [(20, mpf("0.5")), (200, mpf("0.5"))]:
        mu, var = K * p, K * p * (1 - p)
        zeta = 1 - (1 - p) ** K
        g2 = L**2 * (mu**2 + var) / mu**2 + d / mu**2 * (s2 * mu + n0)
        unk = 2 * smooth / (lam**2 * T) * g2
        m1t, m2t = 1 / mu + var / mu**3, 1 / mu**2 + 3 * var / mu**4
        m1e, m2e = inv_moments(pmf_uniform(K, p))
        kt = 2 * smooth / (lam**2 * T) * (L**2 / zeta + d / zeta**2 * (s2 * m1t + m2t * n0))
        ke = 2 * smooth / (lam**2 * T) * (L**2 / zeta + d / zeta**2 * (s2 * m1e + m2e * n0))
        print("bounds K", K, "G2", g2, "unknown", unk, "known_taylor", kt, "known_exact", ke)
    # Cor. 2 at K=200, delta'=1e-5
    K = 200
    a = 2 * sqrt(mpf("0.5") * log(2 / dl))
    cor2 = 2 * smooth / (lam**2 * T) * (L**2 * (a * (sqrt(K) - 1 / sqrt(K)) + 1) / (a * sqrt(K))
                                         + d / (a**2 * K) * (a * sqrt(K) * s2 + n0))
    print("cor2 K=200", cor2)


if __name__ == "__main__":
    main()
