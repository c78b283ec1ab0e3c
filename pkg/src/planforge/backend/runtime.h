/* Runtime support for emitted query programs.
 *
 * Everything the code generator can reference lives here: .tbl readers,
 * date arithmetic, string dictionaries, a fallback generic hash map keyed by
 * 64-bit integers (insertion-ordered iteration), growable vectors, a stable
 * merge sort over pointer arrays, hashing and timing helpers.
 *
 * C99, single header, no dependencies beyond the standard library. Memory is
 * allocated up front and released by the operating system at process exit.
 */
#ifndef PLANFORGE_RUNTIME_H
#define PLANFORGE_RUNTIME_H

#define _POSIX_C_SOURCE 199309L

#include <inttypes.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>
#include <time.h>

/* ---- failure ---------------------------------------------------------- */

static inline void rt_fail(const char *msg) {
    fprintf(stderr, "runtime error: %s\n", msg);
    exit(1);
}

static inline void *rt_alloc(size_t n) {
    void *p = calloc(n > 0 ? n : 1, 1);
    if (p == NULL)
        rt_fail("out of memory");
    return p;
}

/* ---- timing ------------------------------------------------------------ */

static inline double rt_now_ms(void) {
    struct timespec ts;
    clock_gettime(CLOCK_MONOTONIC, &ts);
    return (double)ts.tv_sec * 1000.0 + (double)ts.tv_nsec / 1e6;
}

/* ---- dates: days since 1970-01-01, civil-calendar arithmetic ---------- */

static inline int32_t rt_days_from_civil(int32_t y, int32_t m, int32_t d) {
    int32_t era, yoe, doy, doe;
    y -= m <= 2;
    era = (y >= 0 ? y : y - 399) / 400;
    yoe = y - era * 400;
    doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + doe - 719468;
}

static inline void rt_civil_from_days(int32_t z, int32_t *y, int32_t *m, int32_t *d) {
    int32_t era, doe, yoe, yy, doy, mp;
    z += 719468;
    era = (z >= 0 ? z : z - 146096) / 146097;
    doe = z - era * 146097;
    yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    yy = yoe + era * 400;
    doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    mp = (5 * doy + 2) / 153;
    *d = doy - (153 * mp + 2) / 5 + 1;
    *m = mp + (mp < 10 ? 3 : -9);
    *y = yy + (*m <= 2);
}

static inline int32_t rt_date_year(int32_t days) {
    int32_t y, m, d;
    rt_civil_from_days(days, &y, &m, &d);
    return y;
}

static inline void rt_date_str(int32_t days, char *buf) {
    int32_t y, m, d;
    rt_civil_from_days(days, &y, &m, &d);
    if (y < 0) y = 0;
    if (y > 9999) y = 9999;
    snprintf(buf, 16, "%04" PRId32 "-%02" PRId32 "-%02" PRId32,
             y, m % 100, d % 100);
}

/* ---- hashing (shared with the compiler's interpreter) ------------------ */

static inline int32_t rt_hash_int(int32_t x) {
    return (int32_t)(((uint32_t)x * 2654435761u) & 0x7fffffffu);
}

static inline int32_t rt_hash_char(char c) {
    return (int32_t)(unsigned char)c;
}

static inline int32_t rt_hash_double(double v) {
    uint64_t bits;
    memcpy(&bits, &v, sizeof bits);
    return (int32_t)((((uint32_t)(bits ^ (bits >> 32))) * 2654435761u)
                     & 0x7fffffffu);
}

static inline int32_t rt_hash_str(const char *s) {
    uint32_t h = 2166136261u;
    while (*s) {
        h = (h ^ (unsigned char)*s++) * 16777619u;
    }
    return (int32_t)(h & 0x7fffffffu);
}

static inline int32_t rt_hmix(int32_t h, int32_t k) {
    return (int32_t)((((uint32_t)h * 31u) + (uint32_t)k) & 0x7fffffffu);
}

/* 64-bit key mixing for the generic map (bucketing only, per process) */

static inline uint64_t rt_key_int(uint64_t k, int32_t x) {
    return (k << 32) | (uint64_t)(uint32_t)x;
}

static inline uint64_t rt_key_char(uint64_t k, char c) {
    return (k << 8) | (uint64_t)(unsigned char)c;
}

static inline uint64_t rt_key_bool(uint64_t k, bool b) {
    return (k << 1) | (uint64_t)(b ? 1 : 0);
}

static inline uint64_t rt_key_double(uint64_t k, double v) {
    uint64_t bits;
    memcpy(&bits, &v, sizeof bits);
    return k == 0 ? bits : k * 1099511628211ULL + bits;
}

static inline uint64_t rt_key_mix_str(uint64_t k, const char *s) {
    uint64_t h = k ? k : 14695981039346656037ULL;
    while (*s) {
        h = (h ^ (unsigned char)*s++) * 1099511628211ULL;
    }
    return (h ^ 0xFFu) * 1099511628211ULL;
}

/* ---- string operations -------------------------------------------------- */

static inline bool rt_streq(const char *a, const char *b) {
    return strcmp(a, b) == 0;
}

static inline bool rt_str_starts(const char *s, const char *pre) {
    return strncmp(s, pre, strlen(pre)) == 0;
}

static inline bool rt_str_ends(const char *s, const char *suf) {
    size_t ls = strlen(s), lf = strlen(suf);
    return lf <= ls && memcmp(s + ls - lf, suf, lf) == 0;
}

static inline int32_t rt_strcmp(const char *a, const char *b) {
    int c = strcmp(a, b);
    return c < 0 ? -1 : (c > 0 ? 1 : 0);
}

/* word-granularity containment: the needle must sit between separators */
static inline bool rt_str_contains_word(const char *s, const char *w) {
    size_t lw = strlen(w);
    const char *p = s;
    while ((p = strstr(p, w)) != NULL) {
        bool at_start = (p == s) || (p[-1] == ' ');
        bool at_end = (p[lw] == '\0') || (p[lw] == ' ');
        if (at_start && at_end)
            return true;
        p += 1;
    }
    return false;
}

/* ---- growable vector of pointers --------------------------------------- */

typedef struct rt_vec {
    void **data;
    int32_t len;
    int32_t cap;
} rt_vec;

static inline rt_vec *rt_vec_new(void) {
    rt_vec *v = (rt_vec *)rt_alloc(sizeof(rt_vec));
    v->cap = 8;
    v->data = (void **)rt_alloc(sizeof(void *) * (size_t)v->cap);
    return v;
}

static inline void rt_vec_push(rt_vec *v, void *p) {
    if (v->len == v->cap) {
        void **nd = (void **)rt_alloc(sizeof(void *) * (size_t)v->cap * 2);
        memcpy(nd, v->data, sizeof(void *) * (size_t)v->len);
        v->data = nd;
        v->cap *= 2;
    }
    v->data[v->len++] = p;
}

static inline int32_t rt_vec_len(rt_vec *v) {
    return v->len;
}

static inline void *rt_vec_get(rt_vec *v, int32_t i) {
    return v->data[i];
}

/* ---- generic map: open addressing, 64-bit keys, insertion-ordered ------- */

typedef struct rt_map_entry {
    uint64_t key;
    void *val;
} rt_map_entry;

typedef struct rt_map {
    int64_t *slots;        /* entry index + 1, 0 = empty */
    int32_t cap;           /* power of two   */
    rt_map_entry *entries;
    int32_t len;
    int32_t ecap;
} rt_map;

static inline rt_map *rt_map_new(void) {
    rt_map *m = (rt_map *)rt_alloc(sizeof(rt_map));
    m->cap = 64;
    m->slots = (int64_t *)rt_alloc(sizeof(int64_t) * (size_t)m->cap);
    m->ecap = 32;
    m->entries = (rt_map_entry *)rt_alloc(sizeof(rt_map_entry)
                                          * (size_t)m->ecap);
    return m;
}

static inline uint64_t rt_map_slot_hash_(uint64_t k) {
    k ^= k >> 33;
    k *= 0xff51afd7ed558ccdULL;
    k ^= k >> 33;
    return k;
}

static inline void rt_map_grow_(rt_map *m) {
    int32_t ncap = m->cap * 2, i;
    int64_t *ns = (int64_t *)rt_alloc(sizeof(int64_t) * (size_t)ncap);
    for (i = 0; i < m->len; i++) {
        uint64_t h = rt_map_slot_hash_(m->entries[i].key);
        int32_t s = (int32_t)(h & (uint64_t)(ncap - 1));
        while (ns[s] != 0)
            s = (s + 1) & (ncap - 1);
        ns[s] = i + 1;
    }
    m->slots = ns;
    m->cap = ncap;
}

static inline int32_t rt_map_find_(rt_map *m, uint64_t k) {
    uint64_t h = rt_map_slot_hash_(k);
    int32_t s = (int32_t)(h & (uint64_t)(m->cap - 1));
    while (m->slots[s] != 0) {
        int32_t idx = (int32_t)(m->slots[s] - 1);
        if (m->entries[idx].key == k)
            return idx;
        s = (s + 1) & (m->cap - 1);
    }
    return -1;
}

static inline void *rt_map_get(rt_map *m, uint64_t k) {
    int32_t i = rt_map_find_(m, k);
    return i < 0 ? NULL : m->entries[i].val;
}

static inline void rt_map_put(rt_map *m, uint64_t k, void *v) {
    int32_t i = rt_map_find_(m, k);
    if (i >= 0) {
        m->entries[i].val = v;
        return;
    }
    if (m->len * 4 >= m->cap * 3)
        rt_map_grow_(m);
    if (m->len == m->ecap) {
        rt_map_entry *ne = (rt_map_entry *)rt_alloc(
            sizeof(rt_map_entry) * (size_t)m->ecap * 2);
        memcpy(ne, m->entries, sizeof(rt_map_entry) * (size_t)m->len);
        m->entries = ne;
        m->ecap *= 2;
    }
    m->entries[m->len].key = k;
    m->entries[m->len].val = v;
    {
        uint64_t h = rt_map_slot_hash_(k);
        int32_t s = (int32_t)(h & (uint64_t)(m->cap - 1));
        while (m->slots[s] != 0)
            s = (s + 1) & (m->cap - 1);
        m->slots[s] = m->len + 1;
    }
    m->len++;
}

static inline int32_t rt_map_len(rt_map *m) {
    return m->len;
}

static inline uint64_t rt_map_entry_key(rt_map *m, int32_t i) {
    return m->entries[i].key;
}

static inline void *rt_map_entry_val(rt_map *m, int32_t i) {
    return m->entries[i].val;
}

/* ---- string dictionary -------------------------------------------------- */

typedef struct rt_dict {
    rt_map *index;         /* string hash -> rt_vec of code candidates */
    const char **values;   /* code -> string */
    int32_t len;
    int32_t cap;
} rt_dict;

static inline rt_dict *rt_dict_new(void) {
    rt_dict *d = (rt_dict *)rt_alloc(sizeof(rt_dict));
    d->index = rt_map_new();
    d->cap = 64;
    d->values = (const char **)rt_alloc(sizeof(char *) * (size_t)d->cap);
    return d;
}

static inline int32_t rt_dict_code(rt_dict *d, const char *s) {
    rt_vec *cands = (rt_vec *)rt_map_get(d->index,
                                         (uint64_t)(uint32_t)rt_hash_str(s));
    int32_t i;
    if (cands == NULL)
        return -1;
    for (i = 0; i < cands->len; i++) {
        int32_t code = (int32_t)(intptr_t)cands->data[i];
        if (strcmp(d->values[code], s) == 0)
            return code;
    }
    return -1;
}

static inline int32_t rt_dict_intern(rt_dict *d, const char *s) {
    int32_t code = rt_dict_code(d, s);
    uint64_t h;
    rt_vec *cands;
    if (code >= 0)
        return code;
    if (d->len == d->cap) {
        const char **nv = (const char **)rt_alloc(sizeof(char *)
                                                  * (size_t)d->cap * 2);
        memcpy(nv, d->values, sizeof(char *) * (size_t)d->len);
        d->values = nv;
        d->cap *= 2;
    }
    code = d->len++;
    d->values[code] = s;
    h = (uint64_t)(uint32_t)rt_hash_str(s);
    cands = (rt_vec *)rt_map_get(d->index, h);
    if (cands == NULL) {
        cands = rt_vec_new();
        rt_map_put(d->index, h, cands);
    }
    rt_vec_push(cands, (void *)(intptr_t)code);
    return code;
}

static inline int rt_dict_cmp_(const void *a, const void *b) {
    return strcmp(*(const char *const *)a, *(const char *const *)b);
}

/* sort distinct values lexicographically; returns old-code -> new-code */
static inline int32_t *rt_dict_order(rt_dict *d) {
    int32_t i;
    const char **sorted = (const char **)rt_alloc(sizeof(char *)
                                                  * (size_t)(d->len ? d->len : 1));
    int32_t *remap = (int32_t *)rt_alloc(sizeof(int32_t)
                                         * (size_t)(d->len ? d->len : 1));
    memcpy(sorted, d->values, sizeof(char *) * (size_t)d->len);
    qsort(sorted, (size_t)d->len, sizeof(char *), rt_dict_cmp_);
    d->index = rt_map_new();
    for (i = 0; i < d->len; i++) {
        uint64_t h = (uint64_t)(uint32_t)rt_hash_str(sorted[i]);
        rt_vec *cands = (rt_vec *)rt_map_get(d->index, h);
        if (cands == NULL) {
            cands = rt_vec_new();
            rt_map_put(d->index, h, cands);
        }
        rt_vec_push(cands, (void *)(intptr_t)i);
    }
    {
        const char **old = d->values;
        int32_t n = d->len;
        d->values = sorted;
        for (i = 0; i < n; i++) {
            int32_t j;
            /* temporary: find each old value's new code via the index */
            j = (int32_t)-1;
            {
                rt_vec *cands = (rt_vec *)rt_map_get(
                    d->index, (uint64_t)(uint32_t)rt_hash_str(old[i]));
                int32_t t;
                for (t = 0; cands != NULL && t < cands->len; t++) {
                    int32_t cc = (int32_t)(intptr_t)cands->data[t];
                    if (strcmp(sorted[cc], old[i]) == 0) {
                        j = cc;
                        break;
                    }
                }
            }
            if (j < 0)
                rt_fail("dictionary reordering lost a value");
            remap[i] = j;
        }
    }
    return remap;
}

static inline const char *rt_dict_value(rt_dict *d, int32_t code) {
    if (code < 0 || code >= d->len)
        rt_fail("dictionary code out of range");
    return d->values[code];
}

static inline int32_t rt_dict_len(rt_dict *d) {
    return d->len;
}

/* ordered-dictionary prefix range: first/last code whose value starts with
 * the prefix; start=0,end=-1 when nothing matches */
static inline int32_t rt_dict_prefix_start(rt_dict *d, const char *pre) {
    int32_t i;
    size_t lp = strlen(pre);
    for (i = 0; i < d->len; i++)
        if (strncmp(d->values[i], pre, lp) == 0)
            return i;
    return 0;
}

static inline int32_t rt_dict_prefix_end(rt_dict *d, const char *pre) {
    int32_t i;
    size_t lp = strlen(pre);
    for (i = d->len - 1; i >= 0; i--)
        if (strncmp(d->values[i], pre, lp) == 0)
            return i;
    return -1;
}

static inline bool *rt_dict_suffix_table(rt_dict *d, const char *suf) {
    bool *t = (bool *)rt_alloc(sizeof(bool) * (size_t)(d->len ? d->len : 1));
    int32_t i;
    for (i = 0; i < d->len; i++)
        t[i] = rt_str_ends(d->values[i], suf);
    return t;
}

/* word tokenization over single spaces; returns token-code array */
static inline int32_t *rt_tok_intern(rt_dict *d, char *s, int32_t *out_n) {
    int32_t n = 1, i = 0;
    char *p;
    int32_t *toks;
    if (*s == '\0') {
        *out_n = 0;
        return (int32_t *)rt_alloc(sizeof(int32_t));
    }
    for (p = s; *p; p++)
        if (*p == ' ')
            n++;
    toks = (int32_t *)rt_alloc(sizeof(int32_t) * (size_t)n);
    p = s;
    for (;;) {
        char *sp = strchr(p, ' ');
        if (sp != NULL)
            *sp = '\0';
        toks[i++] = rt_dict_intern(d, p);
        if (sp == NULL)
            break;
        p = sp + 1;
    }
    *out_n = n;
    return toks;
}

/* ---- stable merge sort over pointer arrays ------------------------------ */

typedef int (*rt_cmp_fn)(const void *, const void *);

static inline void rt_sort_merge_(void **a, void **tmp, int32_t lo, int32_t hi,
                           rt_cmp_fn cmp) {
    int32_t mid, i, j, k;
    if (hi - lo < 2)
        return;
    mid = lo + (hi - lo) / 2;
    rt_sort_merge_(a, tmp, lo, mid, cmp);
    rt_sort_merge_(a, tmp, mid, hi, cmp);
    for (i = lo, j = mid, k = lo; k < hi; k++) {
        if (i < mid && (j >= hi || cmp(a[i], a[j]) <= 0))
            tmp[k] = a[i++];
        else
            tmp[k] = a[j++];
    }
    memcpy(a + lo, tmp + lo, sizeof(void *) * (size_t)(hi - lo));
}

static inline void rt_sort(void **base, int32_t n, rt_cmp_fn cmp) {
    void **tmp;
    if (n < 2)
        return;
    tmp = (void **)rt_alloc(sizeof(void *) * (size_t)n);
    rt_sort_merge_(base, tmp, 0, n, cmp);
}

/* ---- .tbl reading -------------------------------------------------------- */

typedef struct rt_text {
    char *data;
    size_t size;
} rt_text;

static inline rt_text rt_slurp(const char *dir, const char *name) {
    char path[4096];
    FILE *fh;
    long sz;
    rt_text t;
    snprintf(path, sizeof path, "%s/%s", dir, name);
    fh = fopen(path, "rb");
    if (fh == NULL) {
        fprintf(stderr, "runtime error: cannot open %s\n", path);
        exit(1);
    }
    fseek(fh, 0, SEEK_END);
    sz = ftell(fh);
    fseek(fh, 0, SEEK_SET);
    t.data = (char *)rt_alloc((size_t)sz + 1);
    if (sz > 0 && fread(t.data, 1, (size_t)sz, fh) != (size_t)sz)
        rt_fail("short read");
    t.data[sz] = '\0';
    t.size = (size_t)sz;
    fclose(fh);
    return t;
}

static inline int32_t rt_count_rows(rt_text t) {
    int32_t n = 0;
    size_t i;
    for (i = 0; i < t.size; i++)
        if (t.data[i] == '\n')
            n++;
    if (t.size > 0 && t.data[t.size - 1] != '\n')
        n++;
    return n;
}

/* field readers: advance *p past the value and its delimiter */

static inline int32_t rt_f_int(char **p) {
    char *q = *p;
    int32_t neg = 0, v = 0;
    if (*q == '-') {
        neg = 1;
        q++;
    }
    while (*q >= '0' && *q <= '9')
        v = v * 10 + (*q++ - '0');
    if (*q == '|')
        q++;
    *p = q;
    return neg ? -v : v;
}

static inline double rt_f_double(char **p) {
    char *end;
    double v = strtod(*p, &end);
    if (*end == '|')
        end++;
    *p = end;
    return v;
}

static inline int32_t rt_f_date(char **p) {
    int32_t y, m, d;
    char *q = *p;
    y = (int32_t)strtol(q, &q, 10);
    q++;
    m = (int32_t)strtol(q, &q, 10);
    q++;
    d = (int32_t)strtol(q, &q, 10);
    if (*q == '|')
        q++;
    *p = q;
    return rt_days_from_civil(y, m, d);
}

static inline char rt_f_char(char **p) {
    char c = **p;
    *p += 1;
    if (**p == '|')
        *p += 1;
    return c;
}

/* terminates the field in place and returns it (zero copy) */
static inline char *rt_f_str(char **p) {
    char *q = *p, *start = *p;
    while (*q != '|' && *q != '\n' && *q != '\0')
        q++;
    if (*q == '|') {
        *q = '\0';
        q++;
    }
    *p = q;
    return start;
}

static inline void rt_f_skip(char **p) {
    char *q = *p;
    while (*q != '|' && *q != '\n' && *q != '\0')
        q++;
    if (*q == '|')
        q++;
    *p = q;
}

static inline void rt_f_endrow(char **p) {
    char *q = *p;
    while (*q != '\n' && *q != '\0')
        q++;
    if (*q == '\n')
        q++;
    *p = q;
}

#endif /* PLANFORGE_RUNTIME_H */
