#ifndef MIXED_ADC_H
#define MIXED_ADC_H

#include <stddef.h>
#include <stdint.h>

typedef enum MadStatus {
  MAD_STATUS_OK = 0,
  MAD_STATUS_INVALID_ARGUMENT = 1,
  MAD_STATUS_NUMERIC_FAILURE = 2,
  MAD_STATUS_IO = 3,
  MAD_STATUS_NULL_POINTER = 4,
  MAD_STATUS_PANIC = 5,
} MadStatus;

typedef enum MadScheme {
  MAD_SCHEME_JOINT_WITH_AS = 0,
  MAD_SCHEME_JOINT_SUBARRAY_AS = 1,
  MAD_SCHEME_JOINT_WITHOUT_AS = 2,
  MAD_SCHEME_NOT_JOINT_WITHOUT_AS = 3,
  MAD_SCHEME_ONE_BIT = 4,
  MAD_SCHEME_NON_ROUND_ROBIN = 5,
  // Uses the `bits` argument.
  MAD_SCHEME_MULTI_BIT = 6,
  MAD_SCHEME_FULL_RES = 7,
} MadScheme;

typedef enum MadDetector {
  MAD_DETECTOR_MRC = 0,
  MAD_DETECTOR_ZF = 1,
} MadDetector;

typedef enum MadTraining {
  MAD_TRAINING_ONE_BIT_ONLY = 0,
  MAD_TRAINING_FULL_RES_RR = 1,
  MAD_TRAINING_JOINT_RR = 2,
} MadTraining;

typedef enum MadCross {
  MAD_CROSS_NOISELESS = 0,
  MAD_CROSS_EXACT = 1,
  MAD_CROSS_IGNORED = 2,
} MadCross;

// Opaque system configuration.
typedef struct MadConfig MadConfig;

typedef struct MadPowerSplit {
  double fraction;
  double p_t;
  double p_d;
  size_t eta_eff;
  double sum_se;
} MadPowerSplit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the calling thread's last error message (NUL-terminated,
// truncated to `len`) into `buf` and returns its full length in bytes.
// Passing a null `buf` only queries the length.
//
// # Safety
// `buf` must be null or valid for `len` bytes.
size_t mad_last_error_message(char *buf, size_t len);

// Library version as a static NUL-terminated string.
const char *mad_version(void);

// Creates a configuration with unit path loss, `eta = users`, statistics-aware
// power control and `p = p_t = p_d` set from `snr_db`.
//
// # Safety
// `out_cfg` must be valid for writes. Free the result with [`mad_config_free`].
enum MadStatus mad_config_new(size_t antennas,
                              size_t highres,
                              size_t users,
                              size_t coherence,
                              double sigma_n2,
                              double snr_db,
                              struct MadConfig **out_cfg);

// Loads a configuration from a TOML or JSON file.
//
// # Safety
// `path` must be a NUL-terminated string and `out_cfg` valid for writes.
enum MadStatus mad_config_from_file(const char *path, struct MadConfig **out_cfg);

// # Safety
// `cfg` must be null or a handle from this library not yet freed.
void mad_config_free(struct MadConfig *cfg);

// Sets the training and data powers.
//
// # Safety
// `cfg` must be a live handle.
enum MadStatus mad_config_set_powers(struct MadConfig *cfg, double p_t, double p_d);

// Writes `M`, `N`, `K`, `T` and `eta` into `dims[0..5]`.
//
// # Safety
// `cfg` must be a live handle and `dims` valid for 5 writes.
enum MadStatus mad_config_dims(const struct MadConfig *cfg, size_t *dims);

// Closed-form per-user estimate and error variances of a training scheme
// (a `MadTraining` value) under a `MadCross` correlation model.
// Both arrays must hold at least `K` values.
//
// # Safety
// `cfg` must be a live handle; the arrays must be valid for `len` writes.
enum MadStatus mad_estimation_variances(const struct MadConfig *cfg,
                                        uint32_t scheme,
                                        uint32_t model,
                                        double *var_est,
                                        double *var_err,
                                        size_t len);

// Joint-estimator weights per user. Each array must hold at least `K` values.
//
// # Safety
// `cfg` must be a live handle; the arrays must be valid for `len` writes.
enum MadStatus mad_joint_weights(const struct MadConfig *cfg,
                                 uint32_t model,
                                 double *w_inf,
                                 double *w_one,
                                 double *varsigma,
                                 size_t len);

// Sum SE of a scheme (a `MadScheme` value) under a `MadDetector` at the
// configured powers. `bits` is read for
// [`MadScheme::MultiBit`] only. Simulated schemes use `trials` draws from
// `seed` and report a standard error; closed forms report `-1`.
//
// # Safety
// `cfg` must be a live handle; `sum_se` and `stderr` valid for writes.
enum MadStatus mad_scheme_se(const struct MadConfig *cfg,
                             uint32_t scheme_kind,
                             uint32_t bits,
                             uint32_t det,
                             uint64_t trials,
                             uint64_t seed,
                             double *sum_se,
                             double *stderr);

// Training/data power split maximizing the sum SE at average power `p_ave`.
//
// # Safety
// `cfg` must be a live handle; `result` valid for writes.
enum MadStatus mad_optimize_power_split(const struct MadConfig *cfg,
                                        double p_ave,
                                        uint32_t scheme_kind,
                                        uint32_t bits,
                                        uint32_t det,
                                        uint64_t trials,
                                        uint64_t seed,
                                        struct MadPowerSplit *result);

// Mean of the `m`-th smallest of `population` unit-scale Gamma(`shape`) variables.
//
// # Safety
// `value` must be valid for writes.
enum MadStatus mad_chi_m(size_t m, size_t population, size_t shape, double *value);

// AQNM gain `alpha_0` of a `bits`-bit quantizer.
//
// # Safety
// `value` must be valid for writes.
enum MadStatus mad_aqnm_alpha(uint32_t bits, double *value);

// Gamma(`shape`, `scale`) CDF at `x`.
//
// # Safety
// `value` must be valid for writes.
enum MadStatus mad_gamma_cdf(double x, double shape, double scale, double *value);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MIXED_ADC_H */
