"""Weighted and unweighted average recall from a confusion matrix."""

from msstnet import confusion, uar, war

# three clips of class 0, one of class 1; two class-0 clips are right
labels = [0, 0, 0, 1]
preds = [0, 0, 1, 1]
cm = confusion(preds, labels, 2)
print(cm.counts)
print("WAR", war(cm), "UAR", round(uar(cm), 2))

# a class with no clips is left out of the unweighted mean
cm3 = confusion([0, 1, 1], [0, 1, 0], 3)
print("with an empty class: WAR", round(war(cm3), 2), "UAR", round(uar(cm3), 2))
