"""Image spam detection toolkit: pixel/edge features, SVM, MLP, and CNN
classifiers, ROC/AUC evaluation, and challenge-corpus synthesis."""

__version__ = "0.1.0"
