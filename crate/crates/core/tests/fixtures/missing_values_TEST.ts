@problemName TinyGestures
@timeStamps false
@missing true
@univariate false
@dimensions 2
@equalLength true
@seriesLength 5
@classLabel true up down
@data
1,?,3,?,5:?,2,2,NaN,8:up
?,?,1,2,?:4,3,2,1,0:down
