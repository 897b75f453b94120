# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled core for the hot kernels.

Same contract as the numpy fallback: integer-exact, disjoint writes per
output-channel range, GIL released so callers can parallelize across
channel ranges with plain threads.

The convolutions gather the valid tap words of each output position into
a small stack buffer once, then sweep output channels over contiguous
weight rows, so the inner loop is pure XOR+popcount."""

from libc.stdint cimport int32_t, int64_t, uint8_t, uint64_t

cdef extern from *:
    """
    #if defined(__GNUC__) || defined(__clang__)
    #  define FRACBNN_POPCNT64(x) __builtin_popcountll(x)
    #else
    static int FRACBNN_POPCNT64(unsigned long long v) {
        v = v - ((v >> 1) & 0x5555555555555555ULL);
        v = (v & 0x3333333333333333ULL) + ((v >> 2) & 0x3333333333333333ULL);
        v = (v + (v >> 4)) & 0x0f0f0f0f0f0f0f0fULL;
        return (int)((v * 0x0101010101010101ULL) >> 56);
    }
    #endif
    """
    int FRACBNN_POPCNT64(uint64_t x) nogil

NAME = "native"

# tap gather capacity: k*k*ceil(C/64); 288 covers 3x3 kernels to 2048 channels
cdef enum:
    TAP_CAP = 288


def conv_base(const uint64_t[:, :, ::1] xw, const uint64_t[:, :, :, ::1] ww,
              int c_in, int stride, int pad,
              int32_t[:, :, ::1] out, int oc_start, int oc_end):
    """Binary convolution in the signed-dot domain over packed words."""
    cdef Py_ssize_t h = xw.shape[0]
    cdef Py_ssize_t w = xw.shape[1]
    cdef Py_ssize_t wc = xw.shape[2]
    cdef Py_ssize_t k = ww.shape[1]
    cdef Py_ssize_t ho = out.shape[1]
    cdef Py_ssize_t wo = out.shape[2]
    cdef uint64_t xbuf[TAP_CAP]
    cdef Py_ssize_t off[TAP_CAP]
    cdef Py_ssize_t oc, oh, ow, ky, kx, j, ih, iw, nt, t, nvalid
    cdef int64_t mism
    cdef const uint64_t* wrow
    if k * k * wc > TAP_CAP:
        _conv_base_wide(xw, ww, c_in, stride, pad, out, oc_start, oc_end)
        return
    with nogil:
        for oh in range(ho):
            for ow in range(wo):
                nt = 0
                nvalid = 0
                for ky in range(k):
                    ih = oh * stride + ky - pad
                    if ih < 0 or ih >= h:
                        continue
                    for kx in range(k):
                        iw = ow * stride + kx - pad
                        if iw < 0 or iw >= w:
                            continue
                        nvalid += 1
                        for j in range(wc):
                            xbuf[nt] = xw[ih, iw, j]
                            off[nt] = (ky * k + kx) * wc + j
                            nt += 1
                for oc in range(oc_start, oc_end):
                    wrow = &ww[oc, 0, 0, 0]
                    mism = 0
                    for t in range(nt):
                        mism += FRACBNN_POPCNT64(xbuf[t] ^ wrow[off[t]])
                    out[oc, oh, ow] = <int32_t>(c_in * nvalid - 2 * mism)


def _conv_base_wide(const uint64_t[:, :, ::1] xw, const uint64_t[:, :, :, ::1] ww,
                    int c_in, int stride, int pad,
                    int32_t[:, :, ::1] out, int oc_start, int oc_end):
    # plain loop for channel counts beyond the gather buffer
    cdef Py_ssize_t h = xw.shape[0]
    cdef Py_ssize_t w = xw.shape[1]
    cdef Py_ssize_t wc = xw.shape[2]
    cdef Py_ssize_t k = ww.shape[1]
    cdef Py_ssize_t ho = out.shape[1]
    cdef Py_ssize_t wo = out.shape[2]
    cdef Py_ssize_t oc, oh, ow, ky, kx, j, ih, iw
    cdef int64_t acc, mism, nvalid
    with nogil:
        for oc in range(oc_start, oc_end):
            for oh in range(ho):
                for ow in range(wo):
                    acc = 0
                    nvalid = 0
                    for ky in range(k):
                        ih = oh * stride + ky - pad
                        if ih < 0 or ih >= h:
                            continue
                        for kx in range(k):
                            iw = ow * stride + kx - pad
                            if iw < 0 or iw >= w:
                                continue
                            nvalid += 1
                            mism = 0
                            for j in range(wc):
                                mism += FRACBNN_POPCNT64(xw[ih, iw, j] ^ ww[oc, ky, kx, j])
                            acc += c_in - 2 * mism
                    out[oc, oh, ow] = <int32_t>acc


def frac_update(const uint64_t[:, :, ::1] lsbw, const uint64_t[:, :, :, ::1] ww,
                const int32_t[::1] delta, int c_in, int stride, int pad,
                const int32_t[:, :, ::1] base, int32_t[:, :, ::1] out,
                uint8_t[:, :, ::1] mask, int oc_start, int oc_end):
    """Gated update phase; the LSB dot product runs only where the gate opens."""
    cdef Py_ssize_t h = lsbw.shape[0]
    cdef Py_ssize_t w = lsbw.shape[1]
    cdef Py_ssize_t wc = lsbw.shape[2]
    cdef Py_ssize_t k = ww.shape[1]
    cdef Py_ssize_t ho = out.shape[1]
    cdef Py_ssize_t wo = out.shape[2]
    cdef uint64_t xbuf[TAP_CAP]
    cdef Py_ssize_t off[TAP_CAP]
    cdef Py_ssize_t oc, oh, ow, ky, kx, j, ih, iw, nt, t, nvalid
    cdef int64_t b, mism
    cdef const uint64_t* wrow
    if k * k * wc > TAP_CAP:
        _frac_update_wide(lsbw, ww, delta, c_in, stride, pad, base, out, mask,
                          oc_start, oc_end)
        return
    with nogil:
        for oh in range(ho):
            for ow in range(wo):
                nt = 0
                nvalid = 0
                for ky in range(k):
                    ih = oh * stride + ky - pad
                    if ih < 0 or ih >= h:
                        continue
                    for kx in range(k):
                        iw = ow * stride + kx - pad
                        if iw < 0 or iw >= w:
                            continue
                        nvalid += 1
                        for j in range(wc):
                            xbuf[nt] = lsbw[ih, iw, j]
                            off[nt] = (ky * k + kx) * wc + j
                            nt += 1
                for oc in range(oc_start, oc_end):
                    b = base[oc, oh, ow]
                    if b > delta[oc]:
                        wrow = &ww[oc, 0, 0, 0]
                        mism = 0
                        for t in range(nt):
                            mism += FRACBNN_POPCNT64(xbuf[t] ^ wrow[off[t]])
                        out[oc, oh, ow] = <int32_t>(2 * b + c_in * nvalid - 2 * mism)
                        mask[oc, oh, ow] = 1
                    else:
                        out[oc, oh, ow] = <int32_t>(2 * b)
                        mask[oc, oh, ow] = 0


def _frac_update_wide(const uint64_t[:, :, ::1] lsbw, const uint64_t[:, :, :, ::1] ww,
                      const int32_t[::1] delta, int c_in, int stride, int pad,
                      const int32_t[:, :, ::1] base, int32_t[:, :, ::1] out,
                      uint8_t[:, :, ::1] mask, int oc_start, int oc_end):
    cdef Py_ssize_t h = lsbw.shape[0]
    cdef Py_ssize_t w = lsbw.shape[1]
    cdef Py_ssize_t wc = lsbw.shape[2]
    cdef Py_ssize_t k = ww.shape[1]
    cdef Py_ssize_t ho = out.shape[1]
    cdef Py_ssize_t wo = out.shape[2]
    cdef Py_ssize_t oc, oh, ow, ky, kx, j, ih, iw
    cdef int64_t b, upd, mism
    with nogil:
        for oc in range(oc_start, oc_end):
            for oh in range(ho):
                for ow in range(wo):
                    b = base[oc, oh, ow]
                    if b <= delta[oc]:
                        out[oc, oh, ow] = <int32_t>(2 * b)
                        mask[oc, oh, ow] = 0
                        continue
                    upd = 0
                    for ky in range(k):
                        ih = oh * stride + ky - pad
                        if ih < 0 or ih >= h:
                            continue
                        for kx in range(k):
                            iw = ow * stride + kx - pad
                            if iw < 0 or iw >= w:
                                continue
                            mism = 0
                            for j in range(wc):
                                mism += FRACBNN_POPCNT64(lsbw[ih, iw, j] ^ ww[oc, ky, kx, j])
                            upd += c_in - 2 * mism
                    out[oc, oh, ow] = <int32_t>(2 * b + upd)
                    mask[oc, oh, ow] = 1


def quantize_pack(const int32_t[:, :, ::1] raw, const int32_t[::1] act_scale,
                  uint64_t[:, :, ::1] msb_words, uint64_t[:, :, ::1] lsb_words):
    """Quantize Q16.16 values to 2-bit levels and pack both planes.

    Word arrays must arrive zeroed.  Levels are {-3,-1,+1,+3}*s with ties
    toward the more positive level; the MSB bit is the sign bit (>= 0)."""
    cdef Py_ssize_t c = raw.shape[0]
    cdef Py_ssize_t h = raw.shape[1]
    cdef Py_ssize_t w = raw.shape[2]
    cdef Py_ssize_t ci, hh, cw
    cdef int64_t v, two_s
    cdef uint64_t bit
    cdef Py_ssize_t word
    with nogil:
        for ci in range(c):
            two_s = 2 * <int64_t>act_scale[ci]
            word = ci >> 6
            bit = (<uint64_t>1) << (ci & 63)
            for hh in range(h):
                for cw in range(w):
                    v = raw[ci, hh, cw]
                    if v >= 0:
                        msb_words[hh, cw, word] |= bit
                        if v >= two_s:
                            lsb_words[hh, cw, word] |= bit
                    elif v >= -two_s:
                        lsb_words[hh, cw, word] |= bit
