"""The single manifest of runtime intrinsics the C emitter may reference.

The emitter refuses to produce a call that is not listed here, and the tests
(and the compile harness build) check that every listed name is defined by
runtime.h, so the two sides cannot drift apart.
"""

MANIFEST = {
    "rt_fail": "void rt_fail(const char *msg)",
    "rt_alloc": "void *rt_alloc(size_t n)",
    "rt_now_ms": "double rt_now_ms(void)",
    "rt_days_from_civil": "int32_t rt_days_from_civil(int32_t y, int32_t m, int32_t d)",
    "rt_civil_from_days": "void rt_civil_from_days(int32_t z, int32_t *y, int32_t *m, int32_t *d)",
    "rt_date_year": "int32_t rt_date_year(int32_t days)",
    "rt_date_str": "void rt_date_str(int32_t days, char *buf)",
    "rt_hash_int": "int32_t rt_hash_int(int32_t x)",
    "rt_hash_char": "int32_t rt_hash_char(char c)",
    "rt_hash_double": "int32_t rt_hash_double(double v)",
    "rt_hash_str": "int32_t rt_hash_str(const char *s)",
    "rt_hmix": "int32_t rt_hmix(int32_t h, int32_t k)",
    "rt_key_int": "uint64_t rt_key_int(uint64_t k, int32_t x)",
    "rt_key_char": "uint64_t rt_key_char(uint64_t k, char c)",
    "rt_key_bool": "uint64_t rt_key_bool(uint64_t k, bool b)",
    "rt_key_double": "uint64_t rt_key_double(uint64_t k, double v)",
    "rt_key_mix_str": "uint64_t rt_key_mix_str(uint64_t k, const char *s)",
    "rt_streq": "bool rt_streq(const char *a, const char *b)",
    "rt_str_starts": "bool rt_str_starts(const char *s, const char *pre)",
    "rt_str_ends": "bool rt_str_ends(const char *s, const char *suf)",
    "rt_strcmp": "int32_t rt_strcmp(const char *a, const char *b)",
    "rt_str_contains_word": "bool rt_str_contains_word(const char *s, const char *w)",
    "rt_vec_new": "rt_vec *rt_vec_new(void)",
    "rt_vec_push": "void rt_vec_push(rt_vec *v, void *p)",
    "rt_vec_len": "int32_t rt_vec_len(rt_vec *v)",
    "rt_vec_get": "void *rt_vec_get(rt_vec *v, int32_t i)",
    "rt_map_new": "rt_map *rt_map_new(void)",
    "rt_map_get": "void *rt_map_get(rt_map *m, uint64_t k)",
    "rt_map_put": "void rt_map_put(rt_map *m, uint64_t k, void *v)",
    "rt_map_len": "int32_t rt_map_len(rt_map *m)",
    "rt_map_entry_key": "uint64_t rt_map_entry_key(rt_map *m, int32_t i)",
    "rt_map_entry_val": "void *rt_map_entry_val(rt_map *m, int32_t i)",
    "rt_dict_new": "rt_dict *rt_dict_new(void)",
    "rt_dict_code": "int32_t rt_dict_code(rt_dict *d, const char *s)",
    "rt_dict_intern": "int32_t rt_dict_intern(rt_dict *d, const char *s)",
    "rt_dict_order": "int32_t *rt_dict_order(rt_dict *d)",
    "rt_dict_value": "const char *rt_dict_value(rt_dict *d, int32_t code)",
    "rt_dict_len": "int32_t rt_dict_len(rt_dict *d)",
    "rt_dict_prefix_start": "int32_t rt_dict_prefix_start(rt_dict *d, const char *pre)",
    "rt_dict_prefix_end": "int32_t rt_dict_prefix_end(rt_dict *d, const char *pre)",
    "rt_dict_suffix_table": "bool *rt_dict_suffix_table(rt_dict *d, const char *suf)",
    "rt_tok_intern": "int32_t *rt_tok_intern(rt_dict *d, char *s, int32_t *out_n)",
    "rt_sort": "void rt_sort(void **base, int32_t n, rt_cmp_fn cmp)",
    "rt_slurp": "rt_text rt_slurp(const char *dir, const char *name)",
    "rt_count_rows": "int32_t rt_count_rows(rt_text t)",
    "rt_f_int": "int32_t rt_f_int(char **p)",
    "rt_f_double": "double rt_f_double(char **p)",
    "rt_f_date": "int32_t rt_f_date(char **p)",
    "rt_f_char": "char rt_f_char(char **p)",
    "rt_f_str": "char *rt_f_str(char **p)",
    "rt_f_skip": "void rt_f_skip(char **p)",
    "rt_f_endrow": "void rt_f_endrow(char **p)",
}


def runtime_header_path():
    import importlib.resources as res
    return res.files("planforge") / "backend" / "runtime.h"


def runtime_header_text():
    return runtime_header_path().read_text()
