#!/usr/bin/env python3
# Prototype of the LB-ADMM solver to settle design choices before the C++ build.
import numpy as np

def svid(P):
    A = np.abs(P)
    if not A.any():
        raise ValueError("zero matrix")
    U, S, Vt = np.linalg.svd(A, full_matrices=False)
    u, s, v = np.abs(U[:, 0]), S[0], np.abs(Vt[0])
    a = np.sqrt(s) * u
    b = np.sqrt(s) * v
    sgn = np.where(P >= 0, 1.0, -1.0)
    return sgn * np.outer(a, b)

def factor_solve(target, fixed, Z, L, rho, ridge):
    r = fixed.shape[1]
    A = fixed.T @ fixed + (rho + ridge) * np.eye(r)
    rhs = fixed.T @ target.T + rho * (Z - L).T
    return np.linalg.solve(A, rhs).T

def lagr(W, U, V, ZU, ZV, LU, LV, rho, ridge):
    t = 0.5 * np.linalg.norm(W - U @ V.T, 'fro')**2
    t += 0.5 * ridge * (np.linalg.norm(U,'fro')**2 + np.linalg.norm(V,'fro')**2)
    for X, Z, L in ((U, ZU, LU), (V, ZV, LV)):
        R = X - Z
        t += rho * np.sum(L * R) + 0.5 * rho * np.linalg.norm(R,'fro')**2
    return t

def admm(W, r, K=400, rho_start=None, rho_end=None, ridge=1e-4, tol=1e-4,
         normalize="fold_unit"):
    n, m = W.shape
    Uf, S, Vt = np.linalg.svd(W, full_matrices=False)
    U = Uf[:, :r] * np.sqrt(S[:r])
    V = Vt[:r].T * np.sqrt(S[:r])
    if rho_start is None:
        base = 1e-2 * np.linalg.norm(W,'fro')**2 / (n*m)
        rho_start, rho_end = base, 100*base
    ZU, ZV = svid(U), svid(V)
    LU, LV = np.zeros_like(U), np.zeros_like(V)
    trace = []
    rho_prev = rho_start
    for k in range(K):
        rho = rho_start + (rho_end - rho_start) * (k / max(K-1, 1))
        if rho != rho_prev:  # keep Y = rho*L continuous
            sc = rho_prev / rho
            LU *= sc; LV *= sc
        rho_prev = rho
        if normalize == "fold_unit":
            c = np.linalg.norm(V, 'fro')
            if c > 0:
                V /= c; ZV /= c; LV /= c
                U *= c; ZU *= c; LU *= c
        elif normalize == "balance":
            nu, nv = np.linalg.norm(U,'fro'), np.linalg.norm(V,'fro')
            if nu > 0 and nv > 0:
                c = np.sqrt(nv/nu)
                U *= c; ZU *= c; LU *= c
                V /= c; ZV /= c; LV /= c
        U = factor_solve(W, V, ZU, LU, rho, ridge)
        if normalize == "fold_unit":
            c = np.linalg.norm(U, 'fro')
            if c > 0:
                U /= c; ZU /= c; LU /= c
                V *= c; ZV *= c; LV *= c
        V = factor_solve(W.T, U, ZV, LV, rho, ridge)
        ZU = svid(U + LU); ZV = svid(V + LV)
        LU = LU + U - ZU; LV = LV + V - ZV
        trace.append(lagr(W, U, V, ZU, ZV, LU, LV, rho, ridge))
        rU = np.linalg.norm(U-ZU,'fro')/max(np.linalg.norm(U,'fro'),1e-30)
        rV = np.linalg.norm(V-ZV,'fro')/max(np.linalg.norm(V,'fro'),1e-30)
        if max(rU, rV) < tol and k > 0:
            break
    PU, PV = U + LU, V + LV
    return U, V, PU, PV, np.array(trace)

def balance_extract(PU, PV, floor=1e-12):
    nu, nv = np.linalg.norm(PU,'fro'), np.linalg.norm(PV,'fro')
    eta = 1.0 if nu == 0 or nv == 0 else np.sqrt(nv/nu)
    lu, lv = eta*PU, PV/eta
    s1 = np.maximum(np.mean(np.abs(lu), axis=1), floor)
    s2 = np.maximum(np.mean(np.abs(lv), axis=1), floor)
    return lu, lv, s1, s2

def recon(lu, lv, s1, s2):
    BU = np.where(lu >= 0, 1.0, -1.0)
    BV = np.where(lv >= 0, 1.0, -1.0)
    return (s1[:,None]) * (BU @ BV.T) * (s2[None,:])

def ste_refine(W, lu, lv, s1, s2, epochs=200, lr=0.01):
    # Adam on || W - recon ||_F^2 at X=I (direct weight fit), identity STE
    params = [lu.copy(), lv.copy(), s1.copy(), s2.copy()]
    mom = [np.zeros_like(p) for p in params]
    vel = [np.zeros_like(p) for p in params]
    b1, b2, eps = 0.9, 0.999, 1e-8
    best = [p.copy() for p in params]
    def loss(ps):
        return np.linalg.norm(W - recon(*ps), 'fro')**2
    best_l = loss(params)
    t = 0
    for ep in range(epochs):
        t += 1
        lu_, lv_, s1_, s2_ = params
        BU = np.where(lu_ >= 0, 1.0, -1.0)
        BV = np.where(lv_ >= 0, 1.0, -1.0)
        R = recon(lu_, lv_, s1_, s2_) - W        # dL/dWhat * 0.5
        G = 2.0 * R
        gs1 = np.sum(G * (BU @ BV.T) * s2_[None,:], axis=1)
        gs2 = np.sum(G * (BU @ BV.T) * s1_[:,None], axis=0)
        M = G * (s1_[:,None] * s2_[None,:])
        glu = M @ BV            # STE: d recon/d lu via sign'=1
        glv = M.T @ BU
        grads = [glu, glv, gs1, gs2]
        lrt = lr * 0.5 * (1 + np.cos(np.pi * ep / epochs))
        for i,(p,g) in enumerate(zip(params, grads)):
            mom[i] = b1*mom[i] + (1-b1)*g
            vel[i] = b2*vel[i] + (1-b2)*g*g
            mh = mom[i]/(1-b1**t); vh = vel[i]/(1-b2**t)
            p -= lrt * mh/(np.sqrt(vh)+eps)
        l = loss(params)
        if l < best_l:
            best_l = l; best = [p.copy() for p in params]
    return best, best_l

rng = np.random.default_rng(0)

print("=== 1) monotonic descent, fixed rho, 100 x (64x48,r=8) ===")
for norm_mode in ("fold_unit", "balance", "none"):
    fails = 0; worst = 0.0
    for t in range(100):
        W = rng.standard_normal((64,48))
        L_f = np.linalg.norm(W, 2)  # spectral norm estimate
        rho = 1.5 * max(1.0, L_f)
        _,_,_,_, tr = admm(W, 8, K=120, rho_start=rho, rho_end=rho, normalize=norm_mode)
        d = np.diff(tr) - 1e-8*(1+np.abs(tr[:-1]))
        if (d > 0).any():
            fails += 1; worst = max(worst, (np.diff(tr)/ (1+np.abs(tr[:-1]))).max())
    print(f"  normalize={norm_mode}: {100-fails}/100 monotone, worst rel increase {worst:.2e}")

print("=== 2) in-class rank-1 recovery, 100 seeds ===")
ok = 0
for t in range(100):
    n, m = rng.integers(4, 65), rng.integers(4, 65)
    u = rng.choice([-1.0,1.0], n); v = rng.choice([-1.0,1.0], m)
    s1 = rng.uniform(0.5, 2.0, n); s2 = rng.uniform(0.5, 2.0, m)
    W = (s1*u)[:,None] * (s2*v)[None,:]
    U,V,PU,PV,tr = admm(W, 1, K=400)
    lu,lv,a,b = balance_extract(PU,PV)
    err = np.linalg.norm(W - recon(lu,lv,a,b),'fro')/np.linalg.norm(W,'fro')
    if err <= 1e-3: ok += 1
print(f"  {ok}/100 within 1e-3")

print("=== 3) tiny 4x4 oracle ratio, 20 targets ===")
def oracle_4x4(W, iters=60):
    n, m = W.shape
    best = np.inf
    for ub in range(2**n):
        u = np.array([1.0 if (ub>>i)&1 else -1.0 for i in range(n)])
        for vb in range(2**m):
            v = np.array([1.0 if (vb>>i)&1 else -1.0 for i in range(m)])
            s1 = np.ones(n); s2 = np.ones(m)
            for _ in range(iters):
                # optimal s1 given s2: rowwise lsq;  Wij ~ s1_i u_i v_j s2_j
                d = (u[:,None]*v[None,:]) * s2[None,:]
                s1 = np.maximum((W*d).sum(1)/np.maximum((d*d).sum(1),1e-30), 0)
                d2 = (u[:,None]*v[None,:]) * s1[:,None]
                s2 = np.maximum((W*d2).sum(0)/np.maximum((d2*d2).sum(0),1e-30), 0)
            e = np.linalg.norm(W - s1[:,None]*(u[:,None]*v[None,:])*s2[None,:],'fro')
            best = min(best, e)
    return best

good = 0; ratios=[]
for t in range(20):
    W = rng.standard_normal((4,4))
    ob = oracle_4x4(W)
    U,V,PU,PV,tr = admm(W, 1, K=400)
    lu,lv,a,b = balance_extract(PU,PV)
    (lu,lv,a,b), fl = ste_refine(W, lu, lv, a, b, epochs=300, lr=0.02)
    pe = np.linalg.norm(W - recon(lu,lv,a,b),'fro')
    ratios.append(pe/ob)
    if pe <= 1.10*ob: good += 1
print(f"  {good}/20 within 1.10x oracle; ratios: {np.round(sorted(ratios),3)}")

print("=== 4) rank monotonicity 64x64, r in (4,8,16), 20 seeds ===")
errs = {4:[],8:[],16:[]}
for t in range(20):
    W = rng.standard_normal((64,64))
    for r in (4,8,16):
        U,V,PU,PV,tr = admm(W, r, K=200)
        lu,lv,a,b = balance_extract(PU,PV)
        errs[r].append(np.linalg.norm(W-recon(lu,lv,a,b),'fro')/np.linalg.norm(W,'fro'))
print("  mean err:", {r: round(float(np.mean(e)),4) for r,e in errs.items()})
