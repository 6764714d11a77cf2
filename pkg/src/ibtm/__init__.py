"""Two-view topic modeling toolkit for discomfort-drawing diagnostics.

Pipeline: parse and normalize a drawing corpus, quantize drawings into
location words, train the shared/private topic model, predict budgeted
diagnostic label rankings for new drawings, and synthesize typical drawings
for a given label.
"""

from .corpus import (Corpus, Document, DrawingPoint, LabelMaps, LabelVocab,
                     build_label_vocab, load_corpus, normalize_labels,
                     parse_corpus, preprocess_corpus, save_corpus,
                     serialize_corpus, split_bilateral)
from .featurize import (BagOfWords, LocationVocab, RegionCount,
                        build_location_vocab, count_regions, encode_drawing,
                        label_budget, load_location_vocab,
                        save_location_vocab)
from .generate import (SyntheticDrawing, generate_drawing, infer_from_label,
                       render_heatmap, top_locations)
from .model import (DocPosterior, DocTokens, GlobalTopics, HyperParams,
                    ModelConfig, TopicEstimates, TrainedModel, e_step_document,
                    elbo, init_model, load_model, m_step, sample_document,
                    save_model, train)
from .pipeline import corpus_to_tokens, doc_to_tokens, fit_corpus
from .predict import (EvalProtocol, EvalReport, Prediction, evaluate,
                      f_measure, format_eval_report, infer_heldout, predict,
                      rank_labels, rank_scores)

__version__ = "0.1.0"
