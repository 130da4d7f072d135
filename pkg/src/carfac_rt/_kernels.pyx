# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops for the float and fixed-point CARFAC engines.

Every expression keeps the operation order of ``_pykernels`` and is built
without FP contraction, so results match the pure-Python path bit for bit.
"""

from libc.stdint cimport int64_t

cdef enum:
    W0 = 0
    W1 = 1
    W1P = 2
    R = 3
    G = 4
    LP = 5
    BM = 6
    VM = 7
    V = 8
    NLF = 9
    B = 10
    U = 11


cdef void _spatial(double[::1] m, double[::1] tmp, double s1, double s2) noexcept nogil:
    cdef Py_ssize_t n = m.shape[0], i
    cdef double c = (1.0 - s1) - s2
    cdef double right, left
    if n == 1:
        return
    for i in range(n):
        if i < n - 1:
            right = s1 * m[i + 1]
        else:
            right = s2 * m[i]
        if i > 0:
            left = s2 * m[i - 1]
        else:
            left = s1 * m[i]
        tmp[i] = (c * m[i] + right) + left
    for i in range(n):
        m[i] = tmp[i]


def run_float(const double[::1] x, double[:, ::1] out, const double[:, ::1] coef,
              const double[::1] scal, const int64_t[::1] intervals,
              double[:, ::1] buf, double[:, ::1] mem, double[:, ::1] acc,
              int64_t[::1] count, bint exact):
    cdef Py_ssize_t n_ch = coef.shape[1], n_t = x.shape[0]
    cdef Py_ssize_t t, n, k
    cdef double hk = scal[0], ihc_off = scal[1], ihc_aoff = scal[2]
    cdef double ohc_scale = scal[3], ohc_off = scal[4]
    cdef double rest = scal[5] if exact else scal[6]
    cdef double s1 = scal[7], s2 = scal[8]
    cdef double ct[4]
    cdef double w[4]
    cdef double inv_iv[4]
    cdef int64_t iv[4]
    cdef double cur, ar, cr, p0, p1, w1n, bm, p, p2, p3, vm, pi, q2, q4, q, d
    cdef double mean, inp, b, a, s, sq2, sq4, nlf, ob, u, rn, gn, num, den
    for k in range(4):
        ct[k] = scal[9 + k]
        w[k] = scal[13 + k]
        iv[k] = intervals[k]
        inv_iv[k] = 1.0 / <double>iv[k]
    cdef const double[::1] a0 = coef[0], c0 = coef[1], h = coef[2], r1 = coef[3]
    cdef const double[::1] drz = coef[4], gA = coef[5], gB = coef[6], gC = coef[7]
    import numpy as np
    cdef double[::1] y = np.zeros(n_ch)
    cdef double[::1] v = np.zeros(n_ch)
    cdef double[::1] det = np.zeros(n_ch)
    cdef double[::1] tmp = np.zeros(n_ch)

    with nogil:
        for t in range(n_t):
            cur = x[t]
            for n in range(n_ch):
                ar = a0[n] * buf[R, n]
                cr = c0[n] * buf[R, n]
                p0 = buf[W0, n]
                p1 = buf[W1, n]
                w1n = cr * p0 + ar * p1
                buf[W0, n] = (ar * p0 - cr * p1) + cur
                cur = buf[G, n] * (cur + h[n] * w1n)
                y[n] = cur
                buf[W1P, n] = p1
                buf[W1, n] = w1n
                v[n] = w1n - p1
            for n in range(n_ch):
                bm = y[n] - buf[LP, n]
                buf[LP, n] = buf[LP, n] + hk * bm
                if exact:
                    p = bm + ihc_off
                    if p < 0.0:
                        p = 0.0
                    p2 = p * p
                    p3 = p2 * p
                    vm = p3 / ((p3 + p2) + 0.1)
                else:
                    pi = 1.0 - (bm + ihc_aoff) * 0.25
                    if pi < 0.0:
                        pi = 0.0
                    q2 = pi * pi
                    q4 = q2 * q2
                    p = q4 * q4
                    if p > 1.0:
                        p = 1.0
                    q = 1.0 - p
                    vm = 0.75 * (q * q)
                buf[BM, n] = bm
                buf[VM, n] = vm
                d = vm - rest
                det[n] = d if d > 0.0 else 0.0
            for k in range(4):
                for n in range(n_ch):
                    acc[k, n] = acc[k, n] + det[n]
                count[k] += 1
                if count[k] == iv[k]:
                    count[k] = 0
                    for n in range(n_ch):
                        mean = acc[k, n] * inv_iv[k]
                        acc[k, n] = 0.0
                        if k > 0:
                            inp = mean + mem[k - 1, n]
                        else:
                            inp = mean
                        mem[k, n] = mem[k, n] + ct[k] * (inp - mem[k, n])
                    _spatial(mem[k], tmp, s1, s2)
            for n in range(n_ch):
                b = ((w[0] * mem[0, n] + w[1] * mem[1, n]) + w[2] * mem[2, n]) + w[3] * mem[3, n]
                a = ohc_scale * v[n] + ohc_off
                if exact:
                    nlf = 1.0 / (1.0 + a * a)
                else:
                    s = 1.0 - (a * a) * 0.125
                    if s < 0.0:
                        s = 0.0
                    sq2 = s * s
                    sq4 = sq2 * sq2
                    nlf = sq4 * sq4
                ob = 1.0 - b
                if ob < 0.0:
                    ob = 0.0
                u = nlf * ob
                if u < 0.0:
                    u = 0.0
                if u > 1.0:
                    u = 1.0
                rn = r1[n] + drz[n] * u
                if exact:
                    num = (1.0 - (2.0 * a0[n]) * rn) + rn * rn
                    den = (1.0 - ((2.0 * a0[n]) - h[n] * c0[n]) * rn) + rn * rn
                    gn = num / den
                else:
                    gn = (gA[n] * u + gB[n]) * u + gC[n]
                buf[R, n] = rn
                buf[G, n] = gn
                buf[V, n] = v[n]
                buf[NLF, n] = nlf
                buf[B, n] = b
                buf[U, n] = u
            for n in range(n_ch):
                out[t, n] = y[n]


def run_car_linear(const double[::1] x, double[:, ::1] out, const double[::1] a0,
                   const double[::1] c0, const double[::1] h, const double[::1] r,
                   const double[::1] g, double[::1] w0, double[::1] w1):
    cdef Py_ssize_t n_ch = a0.shape[0], n_t = x.shape[0], t, n
    cdef double cur, ar, cr, p0, p1, w1n
    with nogil:
        for t in range(n_t):
            cur = x[t]
            for n in range(n_ch):
                ar = a0[n] * r[n]
                cr = c0[n] * r[n]
                p0 = w0[n]
                p1 = w1[n]
                w1n = cr * p0 + ar * p1
                w0[n] = (ar * p0 - cr * p1) + cur
                cur = g[n] * (cur + h[n] * w1n)
                out[t, n] = cur
                w1[n] = w1n


# ---------------------------------------------------------------------------
# fixed-point engine; mirrors _pykernels.run_fixed operation for operation

cdef enum:
    K_ = 0
    HK_M = 1
    HK_S = 2
    HPF_M = 3
    HPF_S = 4
    K0W = 5
    K1_M = 6
    K1_S = 7
    SA = 8
    L0W = 9
    L1_M = 10
    L1_S = 11
    SC = 12
    A_M = 13
    A_S = 14
    BW = 15
    ST_ = 16
    CW = 17

cdef enum:
    IZ0 = 0
    IZ1 = 1
    ILP = 2
    IKA = 3
    IKC = 4
    IG = 5
    IU = 6
    IV = 7
    INLF = 8
    IB = 9
    IBM = 10
    IVM = 11

cdef enum:
    SAT = 0
    MUL = 1
    ADD = 2
    SHIFT = 3
    CMP = 4
    CLAMP = 5
    LOOKUP = 6


cdef inline int64_t rq(int64_t x, int64_t n, int64_t* st, bint nearest) noexcept nogil:
    st[SHIFT] += 1
    if n <= 0:
        return x * ((<int64_t>1) << (-n))
    if nearest:
        st[ADD] += 1
        x += (<int64_t>1) << (n - 1)
    return x >> n


cdef inline int64_t sat(int64_t x, int bits, int64_t* st) noexcept nogil:
    st[CLAMP] += 1
    cdef int64_t hi = ((<int64_t>1) << (bits - 1)) - 1
    if x > hi:
        st[SAT] += 1
        return hi
    if x < -hi - 1:
        st[SAT] += 1
        return -hi - 1
    return x


cdef inline int64_t opnd(int64_t x, int64_t ffrom, int64_t fto, int64_t* st, bint nearest) noexcept nogil:
    return sat(rq(x, ffrom - fto, st, nearest), 18, st)


cdef inline int _log2_pow2(int64_t m) noexcept nogil:
    # exponent of |m| when it is a power of two, else -1
    cdef int64_t a = m if m >= 0 else -m
    cdef int j = 0
    if a == 0 or (a & (a - 1)) != 0:
        return -1
    while a > 1:
        a >>= 1
        j += 1
    return j


cdef inline int64_t mulc(int64_t m, int64_t s, int64_t o, int64_t fo, int64_t ft,
                         int64_t* st, bint nearest) noexcept nogil:
    cdef int j = _log2_pow2(m)
    if j >= 0:
        return rq(o if m > 0 else -o, s - j + fo - ft, st, nearest)
    st[MUL] += 1
    return rq(m * o, s + fo - ft, st, nearest)


cdef inline int64_t mulw(int64_t m, int64_t s, int64_t xw, int64_t fa, int64_t fm, int64_t ft,
                         int64_t* st, bint nearest) noexcept nogil:
    cdef int j = _log2_pow2(m)
    if j >= 0:
        return rq(xw if m > 0 else -xw, s - j + fa - ft, st, nearest)
    return mulc(m, s, opnd(xw, fa, fm, st, nearest), fm, ft, st, nearest)


cdef void _ohc_update(const int64_t[:, ::1] ic, Py_ssize_t n, int64_t v, int64_t b,
                      const int64_t[::1] sc, int64_t[:, ::1] ib, int64_t* st) noexcept nogil:
    cdef int64_t FA = sc[0], FS = sc[1], FU = sc[2], FC = sc[3], FM = sc[4]
    cdef bint nr = sc[5] != 0
    cdef int64_t one_a = (<int64_t>1) << FA
    cdef int64_t one_u = (<int64_t>1) << FU
    cdef int64_t vo, a, ao, sq, s, so, s2, s4, nlf, ob, obo, u, ka, kc, ta, sT, tao, gw, g
    st[ADD] += 8
    st[CMP] += 2
    st[LOOKUP] += 11
    vo = opnd(v, FA, FS, st, nr)
    a = mulc(sc[9], sc[10], vo, FS, FA, st, nr) + sc[11]
    ao = opnd(a, FA, FM, st, nr)
    st[MUL] += 1
    sq = rq(ao * ao, 2 * FM - FA, st, nr)
    s = one_a - rq(sq, 3, st, nr)
    if s < 0:
        s = 0
    so = opnd(s, FA, FU, st, nr)
    st[MUL] += 3
    s2 = rq(so * so, FU, st, nr)
    s4 = rq(s2 * s2, FU, st, nr)
    nlf = rq(s4 * s4, FU, st, nr)
    ob = one_a - b
    if ob < 0:
        ob = 0
    obo = opnd(ob, FA, FU, st, nr)
    st[MUL] += 1
    u = rq(nlf * obo, FU, st, nr)
    st[CLAMP] += 1
    if u < 0:
        u = 0
    elif u > one_u:
        u = one_u
    ka = sat(rq(ic[K0W, n] + mulc(ic[K1_M, n], ic[K1_S, n], u, FU, FC, st, nr),
                FC - ic[SA, n], st, nr), 18, st)
    kc = sat(rq(ic[L0W, n] + mulc(ic[L1_M, n], ic[L1_S, n], u, FU, FC, st, nr),
                FC - ic[SC, n], st, nr), 18, st)
    ta = mulc(ic[A_M, n], ic[A_S, n], u, FU, FC, st, nr) + ic[BW, n]
    sT = ic[ST_, n]
    tao = sat(rq(ta, FC - sT, st, nr), 18, st)
    gw = mulc(tao, sT, u, FU, FC, st, nr) + ic[CW, n]
    g = opnd(gw, FC, FU, st, nr)
    ib[IKA, n] = ka
    ib[IKC, n] = kc
    ib[IG, n] = g
    ib[IU, n] = u
    ib[INLF, n] = nlf


def fixed_init(const int64_t[:, ::1] icoef, const int64_t[::1] iscal, int64_t[:, ::1] ibuf):
    cdef int64_t st[8]
    cdef Py_ssize_t n
    for n in range(8):
        st[n] = 0
    for n in range(icoef.shape[1]):
        _ohc_update(icoef, n, 0, 0, iscal, ibuf, st)


def run_fixed(const int64_t[::1] x, int64_t[:, ::1] out, const int64_t[:, ::1] icoef,
              const int64_t[::1] iscal, const int64_t[::1] intervals,
              int64_t[:, ::1] ibuf, int64_t[:, ::1] imem, int64_t[:, ::1] iacc,
              int64_t[::1] count, int64_t[::1] stats):
    cdef Py_ssize_t n_ch = icoef.shape[1], n_t = x.shape[0], t, n, k, i
    cdef const int64_t[::1] sc = iscal
    cdef int64_t FA = sc[0], FS = sc[1], FU = sc[2], FC = sc[3], FM = sc[4]
    cdef bint nr = sc[5] != 0
    cdef int64_t in_frac = sc[6], ihc_off = sc[7], rest = sc[8]
    cdef int64_t q75_m = sc[12], q75_s = sc[13]
    cdef int64_t s1_m = sc[22], s1_s = sc[23], s2_m = sc[24], s2_s = sc[25]
    cdef int64_t ctm[4]
    cdef int64_t cts[4]
    cdef int64_t wm[4]
    cdef int64_t ws[4]
    cdef int64_t lg[4]
    cdef int64_t iv[4]
    cdef int64_t st[8]
    cdef int64_t one_a = (<int64_t>1) << FA
    cdef int64_t one_u = (<int64_t>1) << FU
    cdef int64_t xin, kk, z0, z1, z0o, z1o, sA, sC, w1n, w0n, hz, yv
    cdef int64_t bm, pi, pio, q2, q4, p, q, vm, d, mean, inp, dd, b, fin, fout
    for k in range(4):
        ctm[k] = sc[14 + 2 * k]
        cts[k] = sc[15 + 2 * k]
        wm[k] = sc[26 + 2 * k]
        ws[k] = sc[27 + 2 * k]
        lg[k] = sc[34 + k]
        iv[k] = intervals[k]
    for k in range(8):
        st[k] = stats[k]
    import numpy as np
    cdef int64_t[::1] y = np.zeros(n_ch, dtype=np.int64)
    cdef int64_t[::1] det = np.zeros(n_ch, dtype=np.int64)
    cdef int64_t[::1] flux = np.zeros(max(n_ch, 1), dtype=np.int64)

    with nogil:
        for t in range(n_t):
            xin = rq(x[t], in_frac - FA, st, nr)
            for n in range(n_ch):
                st[LOOKUP] += 5
                kk = icoef[K_, n]
                z0 = ibuf[IZ0, n]
                z1 = ibuf[IZ1, n]
                z0o = opnd(z0, FA, FS, st, nr)
                z1o = opnd(z1, FA, FS, st, nr)
                sA = icoef[SA, n]
                sC = icoef[SC, n]
                st[ADD] += 6
                w1n = sat(z1 + mulc(ibuf[IKA, n], sA, z1o, FS, FA, st, nr)
                          + mulc(ibuf[IKC, n], sC, z0o, FS, FA, st, nr), 48, st)
                w0n = sat(z0 + mulc(ibuf[IKA, n], sA, z0o, FS, FA, st, nr)
                          - mulc(ibuf[IKC, n], sC, z1o, FS, FA, st, nr)
                          + rq(xin, kk, st, nr), 48, st)
                hz = mulc(icoef[HK_M, n], icoef[HK_S, n], opnd(w1n, FA, FS, st, nr), FS, FA, st, nr)
                yv = sat(mulc(ibuf[IG, n], FU, opnd(xin + hz, FA, FS, st, nr), FS, FA, st, nr), 48, st)
                ibuf[IV, n] = sat(rq(w1n - z1, -kk, st, nr), 48, st)
                ibuf[IZ0, n] = w0n
                ibuf[IZ1, n] = w1n
                y[n] = yv
                xin = yv
            for n in range(n_ch):
                st[LOOKUP] += 1
                st[ADD] += 6
                st[CMP] += 1
                st[CLAMP] += 1
                bm = sat(y[n] - ibuf[ILP, n], 48, st)
                ibuf[ILP, n] = sat(ibuf[ILP, n] + mulw(icoef[HPF_M, n], icoef[HPF_S, n], bm,
                                                       FA, FS, FA, st, nr), 48, st)
                ibuf[IBM, n] = bm
                pi = one_a - rq(bm + ihc_off, 2, st, nr)
                if pi < 0:
                    pi = 0
                elif pi > one_a:
                    pi = one_a
                pio = opnd(pi, FA, FU, st, nr)
                st[MUL] += 4
                q2 = rq(pio * pio, FU, st, nr)
                q4 = rq(q2 * q2, FU, st, nr)
                p = rq(q4 * q4, FU, st, nr)
                q = one_u - p
                vm = mulc(q75_m, q75_s, rq(q * q, FU, st, nr), FU, FU, st, nr)
                ibuf[IVM, n] = vm
                d = vm - rest
                det[n] = d if d > 0 else 0
            for k in range(4):
                st[ADD] += n_ch + 1
                st[CMP] += 1
                for n in range(n_ch):
                    iacc[k, n] = iacc[k, n] + det[n]
                count[k] += 1
                if count[k] == iv[k]:
                    count[k] = 0
                    for n in range(n_ch):
                        mean = rq(iacc[k, n], lg[k] - (FA - FU), st, nr)
                        iacc[k, n] = 0
                        if k > 0:
                            inp = mean + imem[k - 1, n]
                            st[ADD] += 3
                        else:
                            inp = mean
                            st[ADD] += 2
                        dd = opnd(inp - imem[k, n], FA, FM, st, nr)
                        imem[k, n] = sat(imem[k, n] + mulc(ctm[k], cts[k], dd, FM, FA, st, nr), 48, st)
                    if n_ch > 1:
                        for i in range(n_ch - 1):
                            st[ADD] += 1
                            flux[i] = (mulw(s2_m, s2_s, imem[k, i], FA, FM, FA, st, nr)
                                       - mulw(s1_m, s1_s, imem[k, i + 1], FA, FM, FA, st, nr))
                        st[ADD] += 2 * (n_ch - 1)
                        for i in range(n_ch):
                            fin = flux[i - 1] if i > 0 else 0
                            fout = flux[i] if i < n_ch - 1 else 0
                            imem[k, i] = imem[k, i] + fin - fout
            for n in range(n_ch):
                st[ADD] += 3
                b = (mulw(wm[0], ws[0], imem[0, n], FA, FM, FA, st, nr)
                     + mulw(wm[1], ws[1], imem[1, n], FA, FM, FA, st, nr)
                     + mulw(wm[2], ws[2], imem[2, n], FA, FM, FA, st, nr)
                     + mulw(wm[3], ws[3], imem[3, n], FA, FM, FA, st, nr))
                b = sat(b, 48, st)
                ibuf[IB, n] = b
                _ohc_update(icoef, n, ibuf[IV, n], b, sc, ibuf, st)
            for n in range(n_ch):
                out[t, n] = y[n]
    for k in range(8):
        stats[k] = st[k]
