/* C API for the CANTM / CANTM-IA library.
 *
 * All functions return cantm_status; on failure, cantm_last_error() holds a
 * message for the calling thread. Structured inputs and outputs are JSON
 * strings; strings returned through out-parameters are owned by the caller
 * and must be released with cantm_free_string().
 */
#ifndef CANTM_CANTM_H
#define CANTM_CANTM_H

#ifdef __cplusplus
extern "C" {
#endif

typedef enum cantm_status {
  CANTM_OK = 0,
  CANTM_ERR_RUNTIME = 1, /* failure while doing valid work */
  CANTM_ERR_USAGE = 2    /* bad arguments, missing files, config conflicts */
} cantm_status;

typedef struct cantm_corpus cantm_corpus;
typedef struct cantm_model cantm_model;

const char* cantm_last_error(void);
void cantm_free_string(char* s);

/* ---- corpus ----------------------------------------------------------- */

/* options_json keys:
 *   acled_path        delimited event export (optional if ood_path given)
 *   ood_path          one text per line (optional)
 *   ood_count         number of out-of-domain texts to sample
 *   protests_fraction subsampling fraction in (0, 1]; default 1.0
 *   date_start, date_end   inclusive bounds, ISO or "25 June 2019" form
 *   event_type_column, notes_column, date_column   column names
 *   seed              sampling + split seed
 *   split             {"train": 7, "valid": 1, "test": 2} ratios
 *   vocab_size        bag-of-words size; default 500
 */
cantm_status cantm_ingest(const char* options_json, cantm_corpus** out);

cantm_status cantm_corpus_save(const cantm_corpus* corpus, const char* dir);
cantm_status cantm_corpus_open(const char* dir, cantm_corpus** out);
/* Per-class per-split count table plus totals, as JSON. */
cantm_status cantm_corpus_summary(const cantm_corpus* corpus, char** json_out);
cantm_status cantm_corpus_get_text(const cantm_corpus* corpus,
                                   const char* doc_id, char** text_out);
void cantm_corpus_free(cantm_corpus* corpus);

/* ---- training --------------------------------------------------------- */

/* config_json keys (all optional except mode):
 *   mode        "cantm" | "cantm_ia"
 *   ratio, lambda, epochs, batch_size, lr_backbone, lr_heads,
 *   weight_decay, seed, latent, classes
 *   backbone    {profile: "tiny"|"pretrained", weights_path, max_len, ...}
 */
cantm_status cantm_train(const cantm_corpus* corpus, const char* config_json,
                         const char* checkpoint_dir);

/* One-epoch cantm_ia fine-tune of a trained cantm checkpoint (ratio 0.5). */
cantm_status cantm_finetune(const char* base_checkpoint_dir,
                            const cantm_corpus* corpus,
                            const char* config_json,
                            const char* checkpoint_dir);

/* ---- inference -------------------------------------------------------- */

cantm_status cantm_model_open(const char* checkpoint_dir, cantm_model** out);
void cantm_model_free(cantm_model* model);

/* Test-split metrics as JSON (accuracy, weighted/macro F1, per-class F1,
 * confusion matrix). */
cantm_status cantm_eval(const cantm_model* model, const cantm_corpus* corpus,
                        char** metrics_json_out);

/* Per-class top-n topic words as JSON. use_classifier_weights selects the
 * classifier-weight composition extraction instead of the validation
 * class-mean method. */
cantm_status cantm_topics(const cantm_model* model, const cantm_corpus* corpus,
                          int top_n, int use_classifier_weights,
                          char** topics_json_out);

/* Saliency explanation of a raw text: predicted class, class probabilities,
 * per-word scores, selected rationale positions, highlighted HTML. The ANSI
 * rendering is returned separately when ansi_out is non-null. */
cantm_status cantm_explain(const cantm_model* model, const char* text,
                           double ratio, char** record_json_out,
                           char** ansi_out);

/* ---- reporting -------------------------------------------------------- */

/* Renders metrics/topics/examples JSON (as produced above; examples_json is
 * a JSON array of explanation records, may be null) into a self-contained
 * HTML page and a markdown twin. */
cantm_status cantm_report(const char* metrics_json, const char* topics_json,
                          const char* examples_json, char** html_out,
                          char** markdown_out);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* CANTM_CANTM_H */
