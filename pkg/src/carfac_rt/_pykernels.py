"""Pure-Python kernels. Same signatures and bit-identical results as the
compiled ``_kernels`` extension; used when it is not built."""

# buffer rows, mirrored in model.ROW
W0, W1, W1P, R, G, LP, BM, VM, V, NLF, B, U = range(12)


def _spatial(m, s1, s2):
    n = len(m)
    if n == 1:
        return m
    c = (1.0 - s1) - s2
    out = [0.0] * n
    for i in range(n):
        right = s1 * m[i + 1] if i < n - 1 else s2 * m[i]
        left = s2 * m[i - 1] if i > 0 else s1 * m[i]
        out[i] = (c * m[i] + right) + left
    return out


def run_float(x, out, coef, scal, intervals, buf, mem, acc, count, exact):
    n_ch = coef.shape[1]
    a0, c0, h, r1, drz, gA, gB, gC = (row.tolist() for row in coef)
    (hk, ihc_off, ihc_aoff, ohc_scale, ohc_off, rest_x, rest_a, s1, s2,
     ct0, ct1, ct2, ct3, w0, w1, w2, w3) = scal.tolist()
    ct = (ct0, ct1, ct2, ct3)
    rest = rest_x if exact else rest_a
    iv = [int(i) for i in intervals]
    inv_iv = [1.0 / i for i in iv]
    st = [row.tolist() for row in buf]
    z0, z1, z1p, r, g, lp, bmv, vmv, vv, nlfv, bv, uv = st
    mm = [row.tolist() for row in mem]
    aa = [row.tolist() for row in acc]
    cnt = [int(c) for c in count]
    y = [0.0] * n_ch
    v = [0.0] * n_ch
    det = [0.0] * n_ch

    for t in range(len(x)):
        # resonator cascade
        cur = float(x[t])
        for n in range(n_ch):
            ar = a0[n] * r[n]
            cr = c0[n] * r[n]
            p0 = z0[n]
            p1 = z1[n]
            w1n = cr * p0 + ar * p1
            z0[n] = (ar * p0 - cr * p1) + cur
            cur = g[n] * (cur + h[n] * w1n)
            y[n] = cur
            z1p[n] = p1
            z1[n] = w1n
            v[n] = w1n - p1
        # high-pass and inner hair cell
        for n in range(n_ch):
            bm = y[n] - lp[n]
            lp[n] = lp[n] + hk * bm
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
            bmv[n] = bm
            vmv[n] = vm
            d = vm - rest
            det[n] = d if d > 0.0 else 0.0
        # AGC loop
        for k in range(4):
            ak = aa[k]
            for n in range(n_ch):
                ak[n] = ak[n] + det[n]
            cnt[k] += 1
            if cnt[k] == iv[k]:
                cnt[k] = 0
                mk = mm[k]
                ctk = ct[k]
                for n in range(n_ch):
                    mean = ak[n] * inv_iv[k]
                    ak[n] = 0.0
                    inp = mean + mm[k - 1][n] if k > 0 else mean
                    mk[n] = mk[n] + ctk * (inp - mk[n])
                mm[k] = _spatial(mk, s1, s2)
        m0, m1, m2, m3 = mm
        # outer hair cell, undamping, r and g for the next sample
        for n in range(n_ch):
            b = ((w0 * m0[n] + w1 * m1[n]) + w2 * m2[n]) + w3 * m3[n]
            a = ohc_scale * v[n] + ohc_off
            if exact:
                nlf = 1.0 / (1.0 + a * a)
            else:
                s = 1.0 - (a * a) * 0.125
                if s < 0.0:
                    s = 0.0
                s2_ = s * s
                s4 = s2_ * s2_
                nlf = s4 * s4
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
            r[n] = rn
            g[n] = gn
            vv[n] = v[n]
            nlfv[n] = nlf
            bv[n] = b
            uv[n] = u
        out[t, :] = y

    for i, row in enumerate(st):
        buf[i, :] = row
    for k in range(4):
        mem[k, :] = mm[k]
        acc[k, :] = aa[k]
        count[k] = cnt[k]


def run_car_linear(x, out, a0, c0, h, r, g, w0, w1):
    n_ch = len(a0)
    ar = [a0[n] * r[n] for n in range(n_ch)]
    cr = [c0[n] * r[n] for n in range(n_ch)]
    hh = h.tolist()
    gg = g.tolist()
    z0 = w0.tolist()
    z1 = w1.tolist()
    y = [0.0] * n_ch
    for t in range(len(x)):
        cur = float(x[t])
        for n in range(n_ch):
            p0 = z0[n]
            p1 = z1[n]
            w1n = cr[n] * p0 + ar[n] * p1
            z0[n] = (ar[n] * p0 - cr[n] * p1) + cur
            cur = gg[n] * (cur + hh[n] * w1n)
            y[n] = cur
            z1[n] = w1n
        out[t, :] = y
    w0[:] = z0
    w1[:] = z1


# ---------------------------------------------------------------------------
# fixed-point engine
#
# stats slots: 0 saturation events, then op kinds
# 1 mul, 2 add, 3 shift, 4 compare, 5 clamp, 6 lookup, 7 div (never used)

(K, HK_M, HK_S, HPF_M, HPF_S, K0W, K1_M, K1_S, SA, L0W, L1_M, L1_S, SC,
 A_M, A_S, BW, ST, CW) = range(18)
(IZ0, IZ1, ILP, IKA, IKC, IG, IU, IV, INLF, IB, IBM, IVM) = range(12)
SAT, MUL, ADD, SHIFT, CMP, CLAMP, LOOKUP = range(7)


class _Dp:
    """Integer datapath primitives with op accounting."""

    def __init__(self, st, nearest):
        self.st = st
        self.nearest = nearest

    def rq(self, x, n):
        st = self.st
        st[SHIFT] += 1
        if n <= 0:
            return x << -n
        if self.nearest:
            st[ADD] += 1
            x += 1 << (n - 1)
        return x >> n

    def sat(self, x, bits):
        self.st[CLAMP] += 1
        hi = (1 << (bits - 1)) - 1
        if x > hi:
            self.st[SAT] += 1
            return hi
        lo = -hi - 1
        if x < lo:
            self.st[SAT] += 1
            return lo
        return x

    def opnd(self, x, ffrom, fto):
        return self.sat(self.rq(x, ffrom - fto), 18)

    def mulc(self, m, s, o, fo, ft):
        a = m if m >= 0 else -m
        if a and not a & (a - 1):
            j = a.bit_length() - 1
            return self.rq(o if m > 0 else -o, s - j + fo - ft)
        self.st[MUL] += 1
        return self.rq(m * o, s + fo - ft)

    def mulw(self, m, s, xw, fa, fm, ft):
        """Constant times a wide value: shift when m is a power of two,
        otherwise slice an 18-bit operand first."""
        a = m if m >= 0 else -m
        if a and not a & (a - 1):
            j = a.bit_length() - 1
            return self.rq(xw if m > 0 else -xw, s - j + fa - ft)
        return self.mulc(m, s, self.opnd(xw, fa, fm), fm, ft)


def _ohc_update(dp, ic, n, v, b, sc, ib):
    """Velocity NLF, undamping and next-sample rotation/gain coefficients."""
    FA, FS, FU, FC, FM = sc[0], sc[1], sc[2], sc[3], sc[4]
    st = dp.st
    one_a = 1 << FA
    st[ADD] += 8
    st[CMP] += 2
    st[LOOKUP] += 11
    vo = dp.opnd(v, FA, FS)
    a = dp.mulc(sc[9], sc[10], vo, FS, FA) + sc[11]
    ao = dp.opnd(a, FA, FM)
    st[MUL] += 1
    sq = dp.rq(ao * ao, 2 * FM - FA)
    s = one_a - dp.rq(sq, 3)
    if s < 0:
        s = 0
    so = dp.opnd(s, FA, FU)
    st[MUL] += 3
    s2 = dp.rq(so * so, FU)
    s4 = dp.rq(s2 * s2, FU)
    nlf = dp.rq(s4 * s4, FU)
    ob = one_a - b
    if ob < 0:
        ob = 0
    obo = dp.opnd(ob, FA, FU)
    st[MUL] += 1
    u = dp.rq(nlf * obo, FU)
    st[CLAMP] += 1
    one_u = 1 << FU
    u = 0 if u < 0 else (one_u if u > one_u else u)
    ka = dp.sat(dp.rq(int(ic[K0W][n]) + dp.mulc(int(ic[K1_M][n]), int(ic[K1_S][n]), u, FU, FC),
                      FC - int(ic[SA][n])), 18)
    kc = dp.sat(dp.rq(int(ic[L0W][n]) + dp.mulc(int(ic[L1_M][n]), int(ic[L1_S][n]), u, FU, FC),
                      FC - int(ic[SC][n])), 18)
    ta = dp.mulc(int(ic[A_M][n]), int(ic[A_S][n]), u, FU, FC) + int(ic[BW][n])
    sT = int(ic[ST][n])
    tao = dp.sat(dp.rq(ta, FC - sT), 18)
    gw = dp.mulc(tao, sT, u, FU, FC) + int(ic[CW][n])
    g = dp.opnd(gw, FC, FU)
    ib[IKA][n] = ka
    ib[IKC][n] = kc
    ib[IG][n] = g
    ib[IU][n] = u
    ib[INLF][n] = nlf


def fixed_init(icoef, iscal, ibuf):
    sc = [int(v) for v in iscal]
    st = [0] * 8
    dp = _Dp(st, sc[5])
    ib = [row.tolist() for row in ibuf]
    ic = icoef.tolist()
    for n in range(icoef.shape[1]):
        _ohc_update(dp, ic, n, 0, 0, sc, ib)
    for i, row in enumerate(ib):
        ibuf[i, :] = row


def run_fixed(x, out, icoef, iscal, intervals, ibuf, imem, iacc, count, stats):
    sc = [int(v) for v in iscal]
    FA, FS, FU, FC, FM, nearest, in_frac, ihc_off, rest = sc[:9]
    q75_m, q75_s = sc[12], sc[13]
    ct = [(sc[14 + 2 * k], sc[15 + 2 * k]) for k in range(4)]
    s1_m, s1_s, s2_m, s2_s = sc[22:26]
    wk = [(sc[26 + 2 * k], sc[27 + 2 * k]) for k in range(4)]
    lg = sc[34:38]
    iv = [int(v) for v in intervals]
    st = [int(v) for v in stats]
    dp = _Dp(st, nearest)
    rq, sat, opnd, mulc, mulw = dp.rq, dp.sat, dp.opnd, dp.mulc, dp.mulw
    ic = icoef.tolist()
    ib = [row.tolist() for row in ibuf]
    mm = [row.tolist() for row in imem]
    aa = [row.tolist() for row in iacc]
    cnt = [int(c) for c in count]
    n_ch = icoef.shape[1]
    one_a = 1 << FA
    one_u = 1 << FU
    Z0, Z1, LP, KA, KC, G = ib[IZ0], ib[IZ1], ib[ILP], ib[IKA], ib[IKC], ib[IG]
    V, B, BM, VM = ib[IV], ib[IB], ib[IBM], ib[IVM]
    y = [0] * n_ch
    det = [0] * n_ch
    flux = [0] * n_ch
    A48 = 48

    for t in range(len(x)):
        xin = rq(int(x[t]), in_frac - FA)
        for n in range(n_ch):
            st[LOOKUP] += 5
            k = ic[K][n]
            z0 = Z0[n]
            z1 = Z1[n]
            z0o = opnd(z0, FA, FS)
            z1o = opnd(z1, FA, FS)
            sA = ic[SA][n]
            sC = ic[SC][n]
            st[ADD] += 6
            w1n = sat(z1 + mulc(KA[n], sA, z1o, FS, FA) + mulc(KC[n], sC, z0o, FS, FA), A48)
            w0n = sat(z0 + mulc(KA[n], sA, z0o, FS, FA) - mulc(KC[n], sC, z1o, FS, FA)
                      + rq(xin, k), A48)
            hz = mulc(ic[HK_M][n], ic[HK_S][n], opnd(w1n, FA, FS), FS, FA)
            yv = sat(mulc(G[n], FU, opnd(xin + hz, FA, FS), FS, FA), A48)
            V[n] = sat(rq(w1n - z1, -k), A48)
            Z0[n] = w0n
            Z1[n] = w1n
            y[n] = yv
            xin = yv
        for n in range(n_ch):
            st[LOOKUP] += 1
            st[ADD] += 6
            st[CMP] += 1
            st[CLAMP] += 1
            bm = sat(y[n] - LP[n], A48)
            LP[n] = sat(LP[n] + mulw(ic[HPF_M][n], ic[HPF_S][n], bm, FA, FS, FA), A48)
            BM[n] = bm
            pi = one_a - rq(bm + ihc_off, 2)
            pi = 0 if pi < 0 else (one_a if pi > one_a else pi)
            pio = opnd(pi, FA, FU)
            st[MUL] += 4
            q2 = rq(pio * pio, FU)
            q4 = rq(q2 * q2, FU)
            p = rq(q4 * q4, FU)
            q = one_u - p
            vm = mulc(q75_m, q75_s, rq(q * q, FU), FU, FU)
            VM[n] = vm
            d = vm - rest
            det[n] = d if d > 0 else 0
        for k in range(4):
            ak = aa[k]
            st[ADD] += n_ch + 1
            st[CMP] += 1
            for n in range(n_ch):
                ak[n] = ak[n] + det[n]
            cnt[k] += 1
            if cnt[k] == iv[k]:
                cnt[k] = 0
                mk = mm[k]
                ctm, cts = ct[k]
                for n in range(n_ch):
                    mean = rq(ak[n], lg[k] - (FA - FU))
                    ak[n] = 0
                    inp = mean + mm[k - 1][n] if k > 0 else mean
                    st[ADD] += 3 if k > 0 else 2
                    dd = opnd(inp - mk[n], FA, FM)
                    mk[n] = sat(mk[n] + mulc(ctm, cts, dd, FM, FA), A48)
                if n_ch > 1:
                    # net flow across the boundary between channels i and i+1
                    for i in range(n_ch - 1):
                        st[ADD] += 1
                        flux[i] = (mulw(s2_m, s2_s, mk[i], FA, FM, FA)
                                   - mulw(s1_m, s1_s, mk[i + 1], FA, FM, FA))
                    st[ADD] += 2 * (n_ch - 1)
                    for i in range(n_ch):
                        fin = flux[i - 1] if i > 0 else 0
                        fout = flux[i] if i < n_ch - 1 else 0
                        mk[i] = mk[i] + fin - fout
        m0, m1, m2, m3 = mm
        for n in range(n_ch):
            st[ADD] += 3
            b = (mulw(wk[0][0], wk[0][1], m0[n], FA, FM, FA)
                 + mulw(wk[1][0], wk[1][1], m1[n], FA, FM, FA)
                 + mulw(wk[2][0], wk[2][1], m2[n], FA, FM, FA)
                 + mulw(wk[3][0], wk[3][1], m3[n], FA, FM, FA))
            b = sat(b, A48)
            B[n] = b
            _ohc_update(dp, ic, n, V[n], b, sc, ib)
        out[t, :] = y

    for i, row in enumerate(ib):
        ibuf[i, :] = row
    for k in range(4):
        imem[k, :] = mm[k]
        iacc[k, :] = aa[k]
        count[k] = cnt[k]
    stats[:] = st
